// DOM wiring for the rating screen: orbit video, prompt, three sliders,
// previous / replay / submit-next controls.

import { ApiClient } from './api.js';
import { OrbitPlayer } from './player.js';
import { DIMENSIONS, Dimension, RatingSession, SLIDER_DEFAULT } from './session.js';

const LABELS: Record<Dimension, string> = {
  q: 'Quality',
  a: 'Authenticity',
  c: 'Correspondence',
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const subjectId = params.get('subject') ?? 'anonymous';
  const client = new ApiClient('');
  const session = new RatingSession(client, subjectId);

  const video = el<HTMLVideoElement>('orbit-video');
  const promptEl = el<HTMLParagraphElement>('prompt');
  const progressEl = el<HTMLSpanElement>('progress');
  const banner = el<HTMLDivElement>('banner');
  const submitBtn = el<HTMLButtonElement>('submit');
  const prevBtn = el<HTMLButtonElement>('previous');
  const replayBtn = el<HTMLButtonElement>('replay');
  const retryBtn = el<HTMLButtonElement>('retry-media');

  const player = new OrbitPlayer(
    video,
    () => {
      session.markPlaybackComplete();
      refreshControls();
    },
    (retry) => {
      banner.textContent = 'video failed to load';
      retryBtn.hidden = false;
      retryBtn.onclick = () => {
        retryBtn.hidden = true;
        banner.textContent = '';
        retry();
      };
    },
  );

  const sliders = {} as Record<Dimension, HTMLInputElement>;
  const readouts = {} as Record<Dimension, HTMLSpanElement>;
  for (const dim of DIMENSIONS) {
    sliders[dim] = el<HTMLInputElement>(`slider-${dim}`);
    readouts[dim] = el<HTMLSpanElement>(`value-${dim}`);
    sliders[dim].min = '0';
    sliders[dim].max = '5';
    sliders[dim].step = '0.1';
    sliders[dim].addEventListener('input', () => {
      const snapped = session.setSlider(dim, Number(sliders[dim].value));
      sliders[dim].value = String(snapped);
      readouts[dim].textContent = snapped.toFixed(1);
      refreshControls();
    });
  }

  function refreshControls(): void {
    const state = session.snapshot;
    submitBtn.disabled = !session.canSubmit();
    submitBtn.title = session.blockedReason() ?? '';
    progressEl.textContent = session.progressLabel();
    prevBtn.disabled = !state.session || state.session.cursor === 0;
    if (state.lastError) banner.textContent = state.lastError;
  }

  function showItem(): void {
    const state = session.snapshot;
    if (state.finished || !state.item) {
      promptEl.textContent = 'All subsets complete. Thank you!';
      submitBtn.disabled = true;
      return;
    }
    promptEl.textContent = state.item.prompt;
    for (const dim of DIMENSIONS) {
      sliders[dim].value = String(SLIDER_DEFAULT);
      readouts[dim].textContent = SLIDER_DEFAULT.toFixed(1);
    }
    player.loadClip(client.mediaUrl(state.item.video_url));
    banner.textContent = '';
    refreshControls();
  }

  submitBtn.addEventListener('click', async () => {
    submitBtn.disabled = true;
    const outcome = await session.submitAndAdvance();
    if (outcome.ok) {
      showItem();
    } else {
      banner.textContent = outcome.message ?? 'submit failed';
      if (outcome.willRetry) {
        const timer = setInterval(async () => {
          const again = await session.submitAndAdvance();
          if (again.ok) {
            clearInterval(timer);
            showItem();
          }
        }, 2000);
      } else {
        refreshControls();
      }
    }
  });

  prevBtn.addEventListener('click', async () => {
    const item = await session.showPrevious();
    banner.textContent = `previous: "${item.prompt}" rated ${item.existing_rating?.join(', ') ?? '-'}`;
  });

  replayBtn.addEventListener('click', () => player.replay());

  await session.load();
  showItem();
}

boot().catch((err) => {
  document.body.textContent = `failed to start: ${err}`;
});
