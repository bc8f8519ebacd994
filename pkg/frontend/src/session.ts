// Session controller: slider state with grid snapping, submit guards,
// and a retry queue so a rating survives network failures.

import { ApiClient, ApiError, NetworkError, Scores, SessionItem, SessionState } from './api.js';

export const SLIDER_MIN = 0;
export const SLIDER_MAX = 5;
export const SLIDER_STEP = 0.1;
export const SLIDER_DEFAULT = 2.5;

export type Dimension = 'q' | 'a' | 'c';
export const DIMENSIONS: Dimension[] = ['q', 'a', 'c'];

/** Clamp to [0,5] and snap to the 0.1 grid; the server enforces the same rule. */
export function snapToGrid(value: number): number {
  const clamped = Math.min(SLIDER_MAX, Math.max(SLIDER_MIN, value));
  return Math.round(clamped * 10) / 10;
}

export interface UiSessionState {
  subjectId: string;
  item: SessionItem | null;
  session: SessionState | null;
  sliders: Scores;
  touched: Record<Dimension, boolean>;
  playbackComplete: boolean;
  pendingRetry: boolean;
  finished: boolean;
  lastError: string | null;
}

export interface SubmitOutcome {
  ok: boolean;
  advanced: boolean;
  willRetry: boolean;
  message?: string;
}

export class RatingSession {
  private state: UiSessionState;
  private pending: { assetId: string; scores: Scores } | null = null;

  constructor(
    private client: ApiClient,
    subjectId: string,
  ) {
    this.state = {
      subjectId,
      item: null,
      session: null,
      sliders: { q: SLIDER_DEFAULT, a: SLIDER_DEFAULT, c: SLIDER_DEFAULT },
      touched: { q: false, a: false, c: false },
      playbackComplete: false,
      pendingRetry: false,
      finished: false,
      lastError: null,
    };
  }

  get snapshot(): UiSessionState {
    return { ...this.state, sliders: { ...this.state.sliders }, touched: { ...this.state.touched } };
  }

  /** Fetch server state; after a page refresh this resumes at the server's cursor. */
  async load(): Promise<void> {
    try {
      this.state.session = await this.client.getSession(this.state.subjectId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.state.finished = true;
        this.state.item = null;
        return;
      }
      throw err;
    }
    this.state.item = await this.client.getCurrent(this.state.subjectId);
    this.resetForNewItem();
  }

  private resetForNewItem(): void {
    this.state.sliders = { q: SLIDER_DEFAULT, a: SLIDER_DEFAULT, c: SLIDER_DEFAULT };
    this.state.touched = { q: false, a: false, c: false };
    this.state.playbackComplete = false;
    this.state.lastError = null;
  }

  setSlider(dim: Dimension, value: number): number {
    const snapped = snapToGrid(value);
    this.state.sliders[dim] = snapped;
    this.state.touched[dim] = true;
    return snapped;
  }

  markPlaybackComplete(): void {
    this.state.playbackComplete = true;
  }

  /** Submit allowed only after one full playback and all three sliders touched. */
  canSubmit(): boolean {
    return (
      !this.state.finished &&
      this.state.item !== null &&
      this.state.playbackComplete &&
      DIMENSIONS.every((d) => this.state.touched[d])
    );
  }

  blockedReason(): string | null {
    if (this.state.finished) return 'all subsets are complete';
    if (!this.state.item) return 'no item loaded';
    if (!this.state.playbackComplete) return 'watch one full playback before rating';
    const untouched = DIMENSIONS.filter((d) => !this.state.touched[d]);
    if (untouched.length > 0) return `move the ${untouched.join(', ')} slider(s) before submitting`;
    return null;
  }

  /**
   * POST the rating and advance to the next item. A network failure keeps the
   * rating queued (pendingRetry); calling again retries the same payload, so a
   * rating is never dropped. A server rejection surfaces the message and keeps
   * the slider values.
   */
  async submitAndAdvance(): Promise<SubmitOutcome> {
    if (this.pending === null) {
      const reason = this.blockedReason();
      if (reason !== null) {
        return { ok: false, advanced: false, willRetry: false, message: reason };
      }
      this.pending = {
        assetId: this.state.item!.asset_id,
        scores: { ...this.state.sliders },
      };
    }
    try {
      const ack = await this.client.submitRating(
        this.state.subjectId,
        this.pending.assetId,
        this.pending.scores,
      );
      this.pending = null;
      this.state.pendingRetry = false;
      this.state.session = ack.session;
      try {
        this.state.item = await this.client.getCurrent(this.state.subjectId);
        this.resetForNewItem();
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          this.state.finished = true;
          this.state.item = null;
        } else if (err instanceof NetworkError) {
          // the rating is durable server-side; only the refresh failed
          this.state.lastError = 'submitted, but refreshing the next item failed; reload';
        } else {
          throw err;
        }
      }
      return { ok: true, advanced: true, willRetry: false };
    } catch (err) {
      if (err instanceof NetworkError) {
        this.state.pendingRetry = true;
        this.state.lastError = 'network failure: rating kept locally, will retry';
        return { ok: false, advanced: false, willRetry: true, message: this.state.lastError };
      }
      if (err instanceof ApiError) {
        this.pending = null; // server made a decision; do not blindly resend
        this.state.pendingRetry = false;
        this.state.lastError = err.detail;
        return { ok: false, advanced: false, willRetry: false, message: err.detail };
      }
      throw err;
    }
  }

  async showPrevious(): Promise<SessionItem> {
    return this.client.getPrevious(this.state.subjectId);
  }

  progressLabel(): string {
    const s = this.state.session;
    if (!s) return '';
    return `${s.done_overall}/${s.total_assets}`;
  }
}
