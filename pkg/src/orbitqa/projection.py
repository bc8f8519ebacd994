"""Orbit projection clips: rendering contract, frame segmentation/sampling, preprocessing.

The production path decodes pre-rendered orbit videos (or directories of
numbered frames). A synthetic renderer that encodes the camera azimuth in
frame hue backs the tests, so sampling and encoder plumbing can be checked
against closed forms without any real 3D assets.

Indexing is 0-based internally; the front/back convention (first frame and
the frame half an orbit later) translates the 1-based notation at the API
boundary.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import cv2
import numpy as np

from .data import AssetRecord, ValidationError


@dataclass(frozen=True)
class CameraOrbit:
    """Fixed-elevation circular camera path, one full revolution."""

    n_steps: int
    elevation_deg: float = 15.0
    radius: float = 2.7


@dataclass
class ProjectionClip:
    asset_id: str
    frames: np.ndarray  # (K, H, W, 3) uint8, azimuth increasing over 360 degrees
    fps: float = 30.0
    camera_orbit: CameraOrbit | None = None

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 4 or f.shape[0] == 0 or f.shape[3] != 3:
            raise ValidationError("frames must be a non-empty (K, H, W, 3) array")
        self.frames = f

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.frames.shape[2], self.frames.shape[1])  # (width, height)


@dataclass(frozen=True)
class FrameSample:
    mode: str  # "train" | "test"
    n_segments: int
    indices: tuple[int, ...]
    n_frames: int
    crop_resize: tuple[int, int] = (224, 224)

    def __post_init__(self):
        if self.mode not in ("train", "test"):
            raise ValidationError(f"mode must be train or test, got {self.mode!r}")
        if len(self.indices) != self.n_segments:
            raise ValidationError("need exactly one index per segment")
        bounds = segment_bounds(self.n_frames, self.n_segments)
        for i, (idx, (start, end)) in enumerate(zip(self.indices, bounds)):
            if not (start <= idx < end):
                raise ValidationError(f"index {idx} outside segment {i} range [{start}, {end})")
        if any(self.indices[i] >= self.indices[i + 1] for i in range(len(self.indices) - 1)):
            raise ValidationError("indices must be strictly increasing")


def segment_bounds(n_frames: int, n_segments: int) -> list[tuple[int, int]]:
    """Half-open contiguous segments; the first n_frames % n_segments get the extra frame."""
    if n_frames < n_segments:
        raise ValidationError(f"{n_frames} frames cannot fill {n_segments} segments")
    base, extra = divmod(n_frames, n_segments)
    bounds = []
    start = 0
    for i in range(n_segments):
        end = start + base + (1 if i < extra else 0)
        bounds.append((start, end))
        start = end
    return bounds


def sample_frames(clip: ProjectionClip, mode: str, n_segments: int = 12, seed: int = 0) -> FrameSample:
    """One frame per contiguous segment: random (seeded) in train mode, first in test mode."""
    bounds = segment_bounds(len(clip), n_segments)
    if mode == "test":
        indices = tuple(start for start, _ in bounds)
    elif mode == "train":
        rng = np.random.default_rng(seed)
        indices = tuple(int(rng.integers(start, end)) for start, end in bounds)
    else:
        raise ValidationError(f"mode must be train or test, got {mode!r}")
    return FrameSample(mode=mode, n_segments=n_segments, indices=indices, n_frames=len(clip))


def front_back_frames(clip: ProjectionClip) -> tuple[np.ndarray, np.ndarray]:
    """The first frame and the frame half an orbit later (0-based indices 0 and K/2)."""
    k = len(clip)
    if k % 2 != 0:
        raise ValidationError(f"front/back pairing needs an even frame count, got {k}")
    return clip.frames[0], clip.frames[k // 2]


class ViewRenderer(Protocol):
    """Anything that can draw one view of an asset at a given azimuth."""

    def render_view(self, azimuth_deg: float, elevation_deg: float, resolution: tuple[int, int]) -> np.ndarray:
        ...


def render_orbit(
    asset_id: str,
    renderer: ViewRenderer,
    n_frames: int,
    resolution: tuple[int, int],
    orbit: CameraOrbit | None = None,
    fps: float = 30.0,
) -> ProjectionClip:
    """Render n_frames at equal azimuth steps covering the full 360-degree orbit."""
    if n_frames < 1:
        raise ValidationError("n_frames must be >= 1")
    orbit = orbit or CameraOrbit(n_steps=n_frames)
    frames = []
    for k in range(n_frames):
        azimuth = 360.0 * k / n_frames
        try:
            frame = renderer.render_view(azimuth, orbit.elevation_deg, resolution)
        except Exception as exc:
            raise RuntimeError(f"renderer failed at frame {k} (azimuth {azimuth:.1f} deg): {exc}") from exc
        frame = np.asarray(frame, dtype=np.uint8)
        if frame.shape != (resolution[1], resolution[0], 3):
            raise ValidationError(
                f"renderer returned {frame.shape}, expected {(resolution[1], resolution[0], 3)} at frame {k}"
            )
        frames.append(frame)
    return ProjectionClip(asset_id=asset_id, frames=np.stack(frames), fps=fps, camera_orbit=orbit)


class SyntheticOrbitRenderer:
    """Parametric test asset: frame hue encodes the azimuth, brightness encodes a latent.

    Mean hue of the frame at azimuth theta is exactly theta/360, which gives a
    closed-form oracle for orbit rendering. A bright disc sweeps around the
    frame with the camera so consecutive frames differ geometrically too.
    """

    def __init__(self, latent: float = 0.5, saturation: float = 0.85):
        if not 0.0 <= latent <= 1.0:
            raise ValidationError("latent must be in [0, 1]")
        self.latent = latent
        self.saturation = saturation

    def render_view(self, azimuth_deg: float, elevation_deg: float, resolution: tuple[int, int]) -> np.ndarray:
        w, h = resolution
        hue = (azimuth_deg % 360.0) / 360.0
        value = 0.25 + 0.6 * self.latent
        r, g, b = colorsys.hsv_to_rgb(hue, self.saturation, value)
        frame = np.empty((h, w, 3), dtype=np.uint8)
        frame[..., 0] = int(round(r * 255))
        frame[..., 1] = int(round(g * 255))
        frame[..., 2] = int(round(b * 255))
        # same-hue brighter disc, position driven by azimuth
        cx = int((0.5 + 0.35 * np.cos(np.radians(azimuth_deg))) * (w - 1))
        cy = int((0.5 + 0.35 * np.sin(np.radians(azimuth_deg))) * (h - 1))
        rb, gb, bb = colorsys.hsv_to_rgb(hue, self.saturation, min(1.0, value + 0.3))
        cv2.circle(frame, (cx, cy), max(2, w // 12), (int(rb * 255), int(gb * 255), int(bb * 255)), -1)
        return frame


def mean_hue(frame: np.ndarray) -> float:
    """Average hue in [0, 1) via the circular mean, robust at the wrap point."""
    hsv = cv2.cvtColor(frame, cv2.COLOR_RGB2HSV)
    angles = hsv[..., 0].astype(np.float64) * (2.0 * np.pi / 180.0)  # OpenCV hue is [0, 180)
    mean_angle = np.arctan2(np.sin(angles).mean(), np.cos(angles).mean())
    return float((mean_angle / (2.0 * np.pi)) % 1.0)


def load_clip(
    source: str | Path | AssetRecord,
    fps: float | None = None,
    base_dir: str | Path | None = None,
) -> ProjectionClip:
    """Decode a pre-rendered orbit: a video file or a directory of numbered frames.

    Relative paths resolve against base_dir (typically the manifest's directory).
    """
    if isinstance(source, AssetRecord):
        path = Path(source.video_path)
        asset_id = source.asset_id
    else:
        path = Path(source)
        asset_id = path.stem
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    if not path.exists():
        raise FileNotFoundError(f"clip source {path} does not exist")
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
        if not files:
            raise ValidationError(f"no frame images in {path}")
        frames = []
        for f in files:
            img = cv2.imread(str(f), cv2.IMREAD_COLOR)
            if img is None:
                raise ValidationError(f"unreadable frame image {f}")
            frames.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
        return ProjectionClip(asset_id=asset_id, frames=np.stack(frames), fps=fps or 30.0)
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise ValidationError(f"cannot open video {path}")
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
    video_fps = cap.get(cv2.CAP_PROP_FPS) or 30.0
    cap.release()
    if not frames:
        raise ValidationError(f"video {path} decoded to zero frames")
    return ProjectionClip(asset_id=asset_id, frames=np.stack(frames), fps=fps or float(video_fps))


def write_clip_video(clip: ProjectionClip, path: str | Path) -> None:
    """Encode a clip to an mp4 file (test/demo material for the production path)."""
    path = Path(path)
    w, h = clip.resolution
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"mp4v"), clip.fps, (w, h))
    if not writer.isOpened():
        raise RuntimeError(f"cannot open video writer for {path}")
    for frame in clip.frames:
        writer.write(cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    writer.release()


def write_clip_frames(clip: ProjectionClip, directory: str | Path) -> list[Path]:
    """Materialize a clip as lossless numbered PNG frames."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(clip.frames):
        p = directory / f"frame_{i:05d}.png"
        cv2.imwrite(str(p), cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
        paths.append(p)
    return paths


@dataclass(frozen=True)
class PreprocessSpec:
    """Resize target and channel normalization required by the configured encoders."""

    size: tuple[int, int] = (224, 224)  # (width, height)
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.5, 0.5, 0.5)


def preprocess(images: np.ndarray, spec: PreprocessSpec = PreprocessSpec()) -> np.ndarray:
    """Bilinear resize + channel normalization; returns float32 (N, C, H, W)."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValidationError("expected one or more HxWx3 images")
    if images.shape[1] == 0 or images.shape[2] == 0:
        raise ValidationError("zero-sized image")
    w, h = spec.size
    out = np.empty((images.shape[0], 3, h, w), dtype=np.float32)
    mean = np.asarray(spec.mean, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(spec.std, dtype=np.float32).reshape(3, 1, 1)
    for i, img in enumerate(images):
        if img.shape[:2] != (h, w):
            img = cv2.resize(img, (w, h), interpolation=cv2.INTER_LINEAR)
        chw = img.astype(np.float32).transpose(2, 0, 1) / 255.0
        out[i] = (chw - mean) / std
    return out
