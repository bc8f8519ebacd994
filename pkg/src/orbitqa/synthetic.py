"""Synthetic study material: parametric assets, scripted raters, tiny datasets.

Each synthetic asset carries a latent in [0, 1] that drives its brightness;
ground-truth labels are monotone functions of that latent, so a trained
predictor can be checked for rank agreement without any real 3D content.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import AssetRecord, RatingRecord, save_manifest
from .projection import ProjectionClip, SyntheticOrbitRenderer, render_orbit, write_clip_frames, write_clip_video

GENERATORS = ("gen-alpha", "gen-beta", "gen-gamma", "gen-delta", "gen-epsilon", "gen-zeta")

_PROMPT_WORDS = (
    "amber", "basalt", "carved", "dome", "emerald", "fluted", "gilded", "hollow",
    "ivory", "jade", "knotted", "lattice", "marble", "nested", "orbital", "prism",
)


def synthetic_prompt(rng: np.random.Generator, index: int) -> str:
    n_words = int(rng.integers(2, 7))
    words = rng.choice(_PROMPT_WORDS, size=n_words, replace=True)
    return f"a {' '.join(words)} object {index}"


def render_synthetic_clip(
    asset_id: str, latent: float, n_frames: int, resolution: tuple[int, int]
) -> ProjectionClip:
    renderer = SyntheticOrbitRenderer(latent=latent)
    return render_orbit(asset_id, renderer, n_frames, resolution)


def true_labels(latent: float) -> tuple[float, float, float]:
    """Monotone per-dimension ground truth on the nominal MOS scale."""
    return (
        20.0 + 60.0 * latent,
        15.0 + 70.0 * latent**1.3,
        25.0 + 55.0 * np.sqrt(latent),
    )


def make_synthetic_dataset(
    root: str | Path,
    n_assets: int = 12,
    n_frames: int = 24,
    resolution: tuple[int, int] = (64, 64),
    seed: int = 0,
    as_video: bool = False,
) -> tuple[list[AssetRecord], dict[str, float]]:
    """Write a small manifest plus rendered clips under root; returns records and latents."""
    root = Path(root)
    media = root / ("videos" if as_video else "frames")
    media.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    latents: dict[str, float] = {}
    for i in range(n_assets):
        asset_id = f"asset_{i:04d}"
        latent = float(rng.uniform(0.05, 0.95))
        latents[asset_id] = latent
        clip = render_synthetic_clip(asset_id, latent, n_frames, resolution)
        if as_video:
            path = media / f"{asset_id}.mp4"
            write_clip_video(clip, path)
        else:
            path = media / asset_id
            write_clip_frames(clip, path)
        records.append(AssetRecord(
            asset_id=asset_id,
            prompt=synthetic_prompt(rng, i),
            generator=GENERATORS[i % len(GENERATORS)],
            video_path=str(path.relative_to(root)),  # manifest-relative: dataset is relocatable
            frame_count=n_frames,
            width=resolution[0],
            height=resolution[1],
        ))
    save_manifest(records, root / "manifest.jsonl")
    return records, latents


def scripted_ratings(
    manifest: list[AssetRecord],
    latents: dict[str, float],
    n_subjects: int = 5,
    noise: float = 0.15,
    seed: int = 0,
) -> list[RatingRecord]:
    """Consistent simulated raters: per-subject positive affine view of the truth plus
    bounded uniform noise, snapped to the 0.1 slider grid."""
    rng = np.random.default_rng(seed)
    gains = rng.uniform(0.8, 1.2, size=n_subjects)
    offsets = rng.uniform(-0.3, 0.3, size=n_subjects)
    records = []
    for s in range(n_subjects):
        subject_id = f"subj_{s:02d}"
        for rec in manifest:
            latent = latents[rec.asset_id]
            base = np.array(true_labels(latent)) / 100.0 * 4.0 + 0.5  # roughly [0.5, 4.5]
            raw = gains[s] * base + offsets[s] + rng.uniform(-noise, noise, size=3)
            snapped = np.clip(np.round(raw * 10.0) / 10.0, 0.0, 5.0)
            records.append(RatingRecord(
                subject_id=subject_id,
                asset_id=rec.asset_id,
                scores=(float(snapped[0]), float(snapped[1]), float(snapped[2])),
                session=1,
            ))
    return records
