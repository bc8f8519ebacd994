"""Three-branch quality regressor: shape over the sampled clip, texture over
front/back frames, frozen language-image alignment, concatenation, MLP head.

Encoder presets:
  * "tiny-test": small randomly initialized networks with declared output
    dims; everything stays runnable on CPU without pretrained weights.
  * "video-transformer-small" / "image-transformer-small" /
    "contrastive-pair": the full-scale presets, loaded from torchvision /
    transformers when their weights are available locally.

The alignment encoders are always frozen; only the alignment fusion layer,
the shape/texture encoders, and the head train.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from .data import ScoreTriple, ValidationError
from .projection import PreprocessSpec

SHAPE = "shape"
TEXTURE_FRONT = "texture_front"
TEXTURE_BACK = "texture_back"
ALIGN_IMAGE = "align_image"
ALIGN_TEXT = "align_text"

TINY = "tiny-test"


@dataclass(frozen=True)
class EncoderSpec:
    kind: str
    identifier: str = TINY
    output_dim: int = 64
    frozen: bool = False

    def __post_init__(self):
        if self.kind not in (SHAPE, TEXTURE_FRONT, TEXTURE_BACK, ALIGN_IMAGE, ALIGN_TEXT):
            raise ValidationError(f"unknown encoder kind {self.kind!r}")
        if self.output_dim <= 0:
            raise ValidationError("output_dim must be positive")
        if self.kind in (ALIGN_IMAGE, ALIGN_TEXT) and not self.frozen:
            raise ValidationError(f"{self.kind} encoders are always frozen")


@dataclass(frozen=True)
class ModelConfig:
    shape: EncoderSpec = EncoderSpec(SHAPE, TINY, 64)
    texture_front: EncoderSpec = EncoderSpec(TEXTURE_FRONT, TINY, 48)
    texture_back: EncoderSpec = EncoderSpec(TEXTURE_BACK, TINY, 48)
    align_image: EncoderSpec = EncoderSpec(ALIGN_IMAGE, TINY, 64, frozen=True)
    align_text: EncoderSpec = EncoderSpec(ALIGN_TEXT, TINY, 64, frozen=True)
    align_fused_dim: int = 64
    hidden: tuple[int, int] = (1024, 128)
    use_shape: bool = True
    use_texture: bool = True
    use_align: bool = True
    expected_frames: int = 12
    preprocess: PreprocessSpec = PreprocessSpec()
    output_dim: int = 3

    def __post_init__(self):
        if not (self.use_shape or self.use_texture or self.use_align):
            raise ValidationError("at least one branch must be enabled")
        if self.output_dim != 3:
            raise ValidationError("output width is exactly 3 (quality, authenticity, correspondence)")
        if self.align_image.output_dim != self.align_text.output_dim:
            raise ValidationError("alignment image/text encoders must share an output dim")

    @property
    def feature_dim(self) -> int:
        dim = 0
        if self.use_shape:
            dim += self.shape.output_dim
        if self.use_texture:
            dim += self.texture_front.output_dim + self.texture_back.output_dim
        if self.use_align:
            dim += self.align_fused_dim
        return dim

    def to_dict(self) -> dict:
        def spec(s: EncoderSpec) -> dict:
            return {"kind": s.kind, "identifier": s.identifier, "output_dim": s.output_dim, "frozen": s.frozen}
        return {
            "shape": spec(self.shape),
            "texture_front": spec(self.texture_front),
            "texture_back": spec(self.texture_back),
            "align_image": spec(self.align_image),
            "align_text": spec(self.align_text),
            "align_fused_dim": self.align_fused_dim,
            "hidden": list(self.hidden),
            "use_shape": self.use_shape,
            "use_texture": self.use_texture,
            "use_align": self.use_align,
            "expected_frames": self.expected_frames,
            "preprocess": {
                "size": list(self.preprocess.size),
                "mean": list(self.preprocess.mean),
                "std": list(self.preprocess.std),
            },
            "output_dim": self.output_dim,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        def spec(d: dict) -> EncoderSpec:
            return EncoderSpec(d["kind"], d["identifier"], d["output_dim"], d["frozen"])
        return cls(
            shape=spec(obj["shape"]),
            texture_front=spec(obj["texture_front"]),
            texture_back=spec(obj["texture_back"]),
            align_image=spec(obj["align_image"]),
            align_text=spec(obj["align_text"]),
            align_fused_dim=obj["align_fused_dim"],
            hidden=tuple(obj["hidden"]),
            use_shape=obj["use_shape"],
            use_texture=obj["use_texture"],
            use_align=obj["use_align"],
            expected_frames=obj["expected_frames"],
            preprocess=PreprocessSpec(
                size=tuple(obj["preprocess"]["size"]),
                mean=tuple(obj["preprocess"]["mean"]),
                std=tuple(obj["preprocess"]["std"]),
            ),
            output_dim=obj["output_dim"],
        )


# Table-IV-style branch switch sets: a-c single branches, d-f leave-one-out, g all.
ABLATION_CONFIGS: dict[str, dict[str, bool]] = {
    "a": {"use_shape": False, "use_texture": False, "use_align": True},
    "b": {"use_shape": False, "use_texture": True, "use_align": False},
    "c": {"use_shape": True, "use_texture": False, "use_align": False},
    "d": {"use_shape": False, "use_texture": True, "use_align": True},
    "e": {"use_shape": True, "use_texture": False, "use_align": True},
    "f": {"use_shape": True, "use_texture": True, "use_align": False},
    "g": {"use_shape": True, "use_texture": True, "use_align": True},
}


def ablation_config(base: ModelConfig, key: str) -> ModelConfig:
    if key not in ABLATION_CONFIGS:
        raise ValidationError(f"unknown ablation config {key!r}; choose from {sorted(ABLATION_CONFIGS)}")
    return replace(base, **ABLATION_CONFIGS[key])


@dataclass
class FeatureBundle:
    f_s: torch.Tensor | None
    f_t: torch.Tensor | None
    f_c: torch.Tensor | None
    f: torch.Tensor

    def __post_init__(self):
        parts = [p for p in (self.f_s, self.f_t, self.f_c) if p is not None]
        if sum(p.shape[-1] for p in parts) != self.f.shape[-1]:
            raise ValidationError("fused feature length must equal the sum of branch lengths")
        if not torch.isfinite(self.f).all():
            raise ValidationError("non-finite feature values")


class TinyVideoEncoder(nn.Module):
    """Small 3D conv stack with a temporal-position-sensitive readout."""

    def __init__(self, output_dim: int, expected_frames: int = 12, width: int = 16):
        super().__init__()
        self.expected_frames = expected_frames
        self.conv = nn.Sequential(
            nn.Conv3d(3, width, kernel_size=3, stride=(1, 2, 2), padding=1),
            nn.ReLU(),
            nn.Conv3d(width, width, kernel_size=3, stride=(2, 2, 2), padding=1),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool3d((None, 2, 2))
        t_out = (expected_frames + 1) // 2
        self.fc = nn.Linear(width * t_out * 4, output_dim)

    def forward(self, clip: torch.Tensor) -> torch.Tensor:
        if clip.dim() != 5:
            raise ValidationError("clip batch must be (B, C, T, H, W)")
        if clip.shape[2] != self.expected_frames:
            raise ValidationError(
                f"clip has {clip.shape[2]} frames; encoder expects {self.expected_frames}"
            )
        x = self.pool(self.conv(clip))
        return self.fc(x.flatten(1))


class TinyImageEncoder(nn.Module):
    def __init__(self, output_dim: int, width: int = 16):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(3, width, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, width * 2, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool2d((2, 2))
        self.fc = nn.Linear(width * 2 * 4, output_dim)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() != 4:
            raise ValidationError("image batch must be (B, C, H, W)")
        return self.fc(self.pool(self.conv(image)).flatten(1))


class TinyTextEncoder(nn.Module):
    """Deterministic hashed bag-of-ngrams text embedding behind a fixed projection.

    Stands in for a pretrained prompt encoder: frozen, deterministic, and
    sensitive to the prompt content. Context is capped at max_tokens; longer
    prompts are truncated with a warning.
    """

    n_buckets = 512
    max_tokens = 77

    def __init__(self, output_dim: int, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        proj = rng.standard_normal((self.n_buckets, output_dim)) / np.sqrt(self.n_buckets)
        self.projection = nn.Parameter(torch.tensor(proj, dtype=torch.float32), requires_grad=False)

    def _bucketize(self, prompt: str) -> torch.Tensor:
        tokens = prompt.lower().split()
        if len(tokens) > self.max_tokens:
            warnings.warn(f"prompt has {len(tokens)} tokens; truncating to {self.max_tokens}")
            tokens = tokens[: self.max_tokens]
        counts = torch.zeros(self.n_buckets)
        grams = tokens + [" ".join(p) for p in zip(tokens, tokens[1:])]
        for g in grams:
            h = int.from_bytes(hashlib.sha1(g.encode("utf-8")).digest()[:4], "little")
            counts[h % self.n_buckets] += 1.0
        norm = counts.norm()
        return counts / norm if norm > 0 else counts

    def forward(self, prompts: list[str]) -> torch.Tensor:
        for p in prompts:
            if not p:
                raise ValidationError("prompt must be non-empty")
        bags = torch.stack([self._bucketize(p) for p in prompts])
        return bags @ self.projection


def _build_image_encoder(spec: EncoderSpec) -> nn.Module:
    if spec.identifier == TINY:
        return TinyImageEncoder(spec.output_dim)
    if spec.identifier == "image-transformer-small":
        return _load_torchvision_image_small(spec.output_dim)
    raise ValidationError(f"unknown image encoder preset {spec.identifier!r}")


def _load_torchvision_image_small(output_dim: int) -> nn.Module:
    try:
        from torchvision.models import swin_s
        backbone = swin_s(weights="IMAGENET1K_V1")
    except Exception as exc:  # missing weights, no network, missing torchvision
        raise RuntimeError(
            "image-transformer-small preset needs torchvision swin_s weights available locally; "
            "use the tiny-test encoders when they are not"
        ) from exc
    backbone.head = nn.Linear(backbone.head.in_features, output_dim)
    return backbone


def _load_torchvision_video_small(output_dim: int) -> nn.Module:
    try:
        from torchvision.models.video import swin3d_s
        backbone = swin3d_s(weights="KINETICS400_V1")
    except Exception as exc:
        raise RuntimeError(
            "video-transformer-small preset needs torchvision swin3d_s weights available locally; "
            "use the tiny-test encoders when they are not"
        ) from exc
    backbone.head = nn.Linear(backbone.head.in_features, output_dim)
    return backbone


class _ClipPair(nn.Module):
    """Frozen contrastive language-image pair loaded from transformers."""

    def __init__(self, output_dim: int):
        super().__init__()
        try:
            from transformers import CLIPModel, CLIPProcessor
            self.clip = CLIPModel.from_pretrained("openai/clip-vit-base-patch32")
            self.processor = CLIPProcessor.from_pretrained("openai/clip-vit-base-patch32")
        except Exception as exc:
            raise RuntimeError(
                "contrastive-pair preset needs pretrained weights available locally; "
                "use the tiny-test encoders when they are not"
            ) from exc
        if output_dim != self.clip.config.projection_dim:
            raise ValidationError(
                f"contrastive-pair output_dim must be {self.clip.config.projection_dim}"
            )
        for p in self.clip.parameters():
            p.requires_grad = False

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        return self.clip.get_image_features(pixel_values=images)

    def encode_text(self, prompts: list[str]) -> torch.Tensor:
        tok = self.processor(text=prompts, return_tensors="pt", padding=True, truncation=True)
        return self.clip.get_text_features(**tok)


class AlignmentBranch(nn.Module):
    """Frozen image/text encoders fused by one trainable affine layer.

    Fusion input is [image, text, image*text]; the elementwise product feeds
    the correspondence signal to the head directly.
    """

    def __init__(self, image_spec: EncoderSpec, text_spec: EncoderSpec, fused_dim: int):
        super().__init__()
        d = image_spec.output_dim
        if image_spec.identifier == TINY:
            self.image_encoder: nn.Module = TinyImageEncoder(d)
            self.text_encoder: nn.Module = TinyTextEncoder(d)
            self._pair = None
        elif image_spec.identifier == "contrastive-pair":
            self._pair = _ClipPair(d)
            self.image_encoder = self._pair
            self.text_encoder = self._pair
        else:
            raise ValidationError(f"unknown alignment preset {image_spec.identifier!r}")
        for p in self.image_encoder.parameters():
            p.requires_grad = False
        for p in self.text_encoder.parameters():
            p.requires_grad = False
        self.fuse = nn.Linear(3 * d, fused_dim)

    def encode_image(self, front: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            if self._pair is not None:
                return self._pair.encode_image(front)
            return self.image_encoder(front)

    def encode_text(self, prompts: list[str]) -> torch.Tensor:
        for p in prompts:
            if not p:
                raise ValidationError("prompt must be non-empty")
        with torch.no_grad():
            if self._pair is not None:
                return self._pair.encode_text(prompts)
            return self.text_encoder(prompts)

    def forward(self, front: torch.Tensor, prompts: list[str]) -> torch.Tensor:
        f_i = self.encode_image(front)
        f_t = self.encode_text(prompts)
        return self.fuse(torch.cat([f_i, f_t, f_i * f_t], dim=-1))


class QualityRegressor(nn.Module):
    """Enabled branches -> concatenated feature -> 3-layer MLP -> (q, a, c)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        if config.use_shape:
            if config.shape.identifier == TINY:
                self.shape_encoder = TinyVideoEncoder(config.shape.output_dim, config.expected_frames)
            elif config.shape.identifier == "video-transformer-small":
                self.shape_encoder = _load_torchvision_video_small(config.shape.output_dim)
            else:
                raise ValidationError(f"unknown shape encoder preset {config.shape.identifier!r}")
        if config.use_texture:
            self.texture_front_encoder = _build_image_encoder(config.texture_front)
            self.texture_back_encoder = _build_image_encoder(config.texture_back)
        if config.use_align:
            self.alignment = AlignmentBranch(config.align_image, config.align_text, config.align_fused_dim)
        h1, h2 = config.hidden
        self.head = nn.Sequential(
            nn.Linear(config.feature_dim, h1),
            nn.ReLU(),
            nn.Linear(h1, h2),
            nn.ReLU(),
            nn.Linear(h2, config.output_dim),
        )

    def encode_shape(self, clip: torch.Tensor) -> torch.Tensor:
        if not self.config.use_shape:
            raise ValidationError("shape branch is disabled in this config")
        return self.shape_encoder(clip)

    def encode_texture(self, front: torch.Tensor, back: torch.Tensor) -> torch.Tensor:
        if not self.config.use_texture:
            raise ValidationError("texture branch is disabled in this config")
        if front.shape != back.shape:
            raise ValidationError(f"front/back resolution mismatch: {tuple(front.shape)} vs {tuple(back.shape)}")
        return torch.cat([self.texture_front_encoder(front), self.texture_back_encoder(back)], dim=-1)

    def encode_alignment(self, front: torch.Tensor, prompts: list[str]) -> torch.Tensor:
        if not self.config.use_align:
            raise ValidationError("alignment branch is disabled in this config")
        return self.alignment(front, prompts)

    def features(
        self,
        clip: torch.Tensor | None = None,
        front: torch.Tensor | None = None,
        back: torch.Tensor | None = None,
        prompts: list[str] | None = None,
    ) -> FeatureBundle:
        parts = []
        f_s = f_t = f_c = None
        if self.config.use_shape:
            if clip is None:
                raise ValidationError("shape branch enabled but no clip given")
            f_s = self.encode_shape(clip)
            parts.append(f_s)
        if self.config.use_texture:
            if front is None or back is None:
                raise ValidationError("texture branch enabled but front/back missing")
            f_t = self.encode_texture(front, back)
            parts.append(f_t)
        if self.config.use_align:
            if front is None or prompts is None:
                raise ValidationError("alignment branch enabled but front/prompts missing")
            f_c = self.encode_alignment(front, prompts)
            parts.append(f_c)
        return FeatureBundle(f_s=f_s, f_t=f_t, f_c=f_c, f=torch.cat(parts, dim=-1))

    def forward(
        self,
        clip: torch.Tensor | None = None,
        front: torch.Tensor | None = None,
        back: torch.Tensor | None = None,
        prompts: list[str] | None = None,
    ) -> torch.Tensor:
        return self.head(self.features(clip, front, back, prompts).f)

    def predict(self, asset_ids: list[str], **inputs) -> list[ScoreTriple]:
        self.eval()
        with torch.no_grad():
            out = self.forward(**inputs)
        return [
            ScoreTriple(asset_id=aid, q=float(r[0]), a=float(r[1]), c=float(r[2]))
            for aid, r in zip(asset_ids, out)
        ]

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def frozen_parameters(self):
        return [p for p in self.parameters() if not p.requires_grad]


def build_model(config: ModelConfig, seed: int = 0) -> QualityRegressor:
    """Construct a regressor with seeded initialization (reproducible tiny encoders)."""
    torch.manual_seed(seed)
    return QualityRegressor(config)


def parameter_checksum(params) -> str:
    digest = hashlib.sha256()
    for p in params:
        digest.update(p.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def save_checkpoint(model: QualityRegressor, path, extra: dict | None = None) -> None:
    torch.save({
        "state_dict": model.state_dict(),
        "config": model.config.to_dict(),
        "extra": extra or {},
    }, path)


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> tuple[QualityRegressor, dict]:
    payload = torch.load(path, weights_only=False)
    config = ModelConfig.from_dict(payload["config"])
    if expected_config is not None and config != expected_config:
        raise ValidationError("checkpoint config does not match the requested architecture")
    model = QualityRegressor(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload.get("extra", {})
