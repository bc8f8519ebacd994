// Looping orbit-video playback with a one-full-pass gate and a retry
// affordance on media failure. The DOM element is injected behind a narrow
// surface so the logic is testable without a browser.

export interface VideoSurface {
  src: string;
  loop: boolean;
  currentTime: number;
  readonly duration: number;
  play(): Promise<void> | void;
  load(): void;
  addEventListener(type: string, listener: () => void): void;
}

export class PlaybackGate {
  private furthest = 0;
  private lastTime = 0;
  private done = false;

  /** Feed currentTime/duration on every time update; wrap-around counts as completion. */
  update(currentTime: number, duration: number): boolean {
    if (this.done || !isFinite(duration) || duration <= 0) return this.done;
    if (currentTime + 1e-3 < this.lastTime) {
      // the loop wrapped: a full pass happened
      this.done = true;
    } else {
      this.furthest = Math.max(this.furthest, currentTime);
      if (this.furthest >= duration - 0.05) this.done = true;
    }
    this.lastTime = currentTime;
    return this.done;
  }

  markEnded(): void {
    this.done = true;
  }

  get complete(): boolean {
    return this.done;
  }

  reset(): void {
    this.furthest = 0;
    this.lastTime = 0;
    this.done = false;
  }
}

export class OrbitPlayer {
  readonly gate = new PlaybackGate();
  private failed = false;

  constructor(
    private video: VideoSurface,
    private onFirstFullPlayback: () => void,
    private onMediaError: (retry: () => void) => void,
  ) {
    this.video.loop = true; // clips loop continuously; replay restarts the loop
    this.video.addEventListener('timeupdate', () => this.handleTimeUpdate());
    this.video.addEventListener('ended', () => this.handleEnded());
    this.video.addEventListener('error', () => this.handleError());
  }

  loadClip(url: string): void {
    this.failed = false;
    this.gate.reset();
    this.video.src = url;
    this.video.load();
    void this.video.play();
  }

  replay(): void {
    this.video.currentTime = 0;
    void this.video.play();
  }

  private handleTimeUpdate(): void {
    const was = this.gate.complete;
    if (this.gate.update(this.video.currentTime, this.video.duration) && !was) {
      this.onFirstFullPlayback();
    }
  }

  private handleEnded(): void {
    const was = this.gate.complete;
    this.gate.markEnded();
    if (!was) this.onFirstFullPlayback();
  }

  private handleError(): void {
    if (this.failed) return; // keep a single retry affordance per failure
    this.failed = true;
    this.onMediaError(() => this.loadClip(this.video.src));
  }
}
