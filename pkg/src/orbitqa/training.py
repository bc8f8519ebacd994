"""Training loop and experiment orchestration: fixed-epoch optimization with
per-epoch redrawn train-frame sampling, plus the branch-ablation grid."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .benchmark import BenchmarkResult, run_benchmark
from .data import AssetRecord, MosRecord, ScoreTriple, SplitSpec, ValidationError
from .losses import LossConfig, total_loss
from .model import ModelConfig, QualityRegressor, ablation_config, build_model, save_checkpoint
from .projection import PreprocessSpec, ProjectionClip, front_back_frames, load_clip, preprocess, sample_frames


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 4
    epochs: int = 50
    seed: int = 0
    loss: LossConfig = LossConfig()
    model: ModelConfig = ModelConfig()
    input_resolution: tuple[int, int] = (224, 224)
    n_segments: int = 12
    optimizer: str = "adam"
    # unstated by the protocol; kept at none and recorded in every checkpoint
    weight_decay: float = 0.0
    grad_clip: float | None = None
    lr_schedule: str = "none"
    max_steps: int | None = None  # smoke-test cap; None trains the full epoch budget

    def __post_init__(self):
        if self.lr <= 0:
            raise ValidationError("lr must be > 0")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2 (losses are batch statistics)")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.optimizer != "adam":
            raise ValidationError("only the adaptive-moment optimizer is supported")
        if self.lr_schedule != "none":
            raise ValidationError("no learning-rate schedule is supported")

    @property
    def effective_preprocess(self) -> PreprocessSpec:
        return replace(self.model.preprocess, size=self.input_resolution)

    def audit_dict(self) -> dict:
        return {
            "lr": self.lr, "batch_size": self.batch_size, "epochs": self.epochs,
            "seed": self.seed, "optimizer": self.optimizer,
            "weight_decay": self.weight_decay, "grad_clip": self.grad_clip,
            "lr_schedule": self.lr_schedule,
            "input_resolution": list(self.input_resolution),
            "n_segments": self.n_segments,
            "loss": {"lambda": self.loss.lam, "rank_variant": self.loss.rank_variant},
            "max_steps": self.max_steps,
        }


class ClipStore:
    """Caches decoded projection clips per asset; accepts preloaded clips for tests.

    Relative video paths resolve against base_dir (the manifest's directory).
    """

    def __init__(
        self,
        manifest: list[AssetRecord],
        clips: dict[str, ProjectionClip] | None = None,
        base_dir: str | Path | None = None,
    ):
        self._records = {rec.asset_id: rec for rec in manifest}
        self._cache: dict[str, ProjectionClip] = dict(clips or {})
        self._base_dir = base_dir

    def get(self, asset_id: str) -> ProjectionClip:
        if asset_id not in self._cache:
            if asset_id not in self._records:
                raise ValidationError(f"asset {asset_id!r} not in manifest")
            self._cache[asset_id] = load_clip(self._records[asset_id], base_dir=self._base_dir)
        return self._cache[asset_id]


def assemble_inputs(
    assets: list[AssetRecord],
    store: ClipStore,
    config: TrainConfig,
    mode: str,
    rng: np.random.Generator | None = None,
) -> dict:
    """Build the model input batch: sampled clip tensor, front/back frames, prompts."""
    spec = config.effective_preprocess
    clips, fronts, backs, prompts = [], [], [], []
    for rec in assets:
        clip = store.get(rec.asset_id)
        seed = int(rng.integers(0, 2**32)) if rng is not None else 0
        sample = sample_frames(clip, mode, n_segments=config.n_segments, seed=seed)
        frames = preprocess(clip.frames[list(sample.indices)], spec)       # (T, C, H, W)
        clips.append(torch.from_numpy(frames).permute(1, 0, 2, 3))         # (C, T, H, W)
        front, back = front_back_frames(clip)
        fronts.append(torch.from_numpy(preprocess(front, spec)[0]))
        backs.append(torch.from_numpy(preprocess(back, spec)[0]))
        prompts.append(rec.prompt)
    return {
        "clip": torch.stack(clips),
        "front": torch.stack(fronts),
        "back": torch.stack(backs),
        "prompts": prompts,
    }


def predict_scores(
    model: QualityRegressor,
    assets: list[AssetRecord],
    store: ClipStore,
    config: TrainConfig,
    batch_size: int = 8,
) -> list[ScoreTriple]:
    """Deterministic test-mode inference over a list of assets."""
    model.eval()
    out: list[ScoreTriple] = []
    for i in range(0, len(assets), batch_size):
        chunk = assets[i:i + batch_size]
        batch = assemble_inputs(chunk, store, config, mode="test")
        out.extend(model.predict(
            [a.asset_id for a in chunk],
            clip=batch["clip"] if config.model.use_shape else None,
            front=batch["front"],
            back=batch["back"],
            prompts=batch["prompts"],
        ))
    return out


@dataclass
class TrainResult:
    model: QualityRegressor
    final_loss: float
    steps: int
    log: list[dict] = field(default_factory=list)
    checkpoint_path: Path | None = None
    wall_seconds: float = 0.0


def train(
    config: TrainConfig,
    split: SplitSpec,
    manifest: list[AssetRecord],
    mos: list[MosRecord],
    store: ClipStore,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Optimize the regressor on the split's train side per the fixed protocol.

    Per epoch the train set is reshuffled and train-mode frame indices are
    redrawn; nothing is mutated outside the model and the optional output
    files. Deterministic given the config seed.
    """
    assets_by_id = {a.asset_id: a for a in manifest}
    mos_by_id = {m.asset_id: m for m in mos}
    missing_label = [a for a in split.train_ids if a not in mos_by_id]
    missing_asset = [a for a in split.train_ids if a not in assets_by_id]
    if missing_label or missing_asset:
        raise ValidationError(
            f"train assets missing labels {missing_label[:5]} or manifest entries {missing_asset[:5]}"
        )
    for a in split.train_ids:  # fail before the first step, not mid-epoch
        store.get(a)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = build_model(config.model, seed=config.seed)
    optimizer = torch.optim.Adam(
        model.trainable_parameters(), lr=config.lr, weight_decay=config.weight_decay
    )

    log: list[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    started = time.time()
    step = 0
    final_loss = float("nan")
    try:
        model.train()
        done = False
        for epoch in range(config.epochs):
            order = rng.permutation(len(split.train_ids))
            for lo in range(0, len(order), config.batch_size):
                idx = order[lo:lo + config.batch_size]
                if len(idx) < 2:
                    continue  # batch statistics need at least two samples
                batch_assets = [assets_by_id[split.train_ids[i]] for i in idx]
                batch = assemble_inputs(batch_assets, store, config, mode="train", rng=rng)
                labels = torch.tensor(
                    [mos_by_id[a.asset_id].mos for a in batch_assets], dtype=torch.float32
                )
                preds = model(
                    clip=batch["clip"] if config.model.use_shape else None,
                    front=batch["front"],
                    back=batch["back"],
                    prompts=batch["prompts"],
                )
                loss, breakdown = total_loss(preds, labels, config.loss)
                optimizer.zero_grad()
                loss.backward()
                if config.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(model.trainable_parameters(), config.grad_clip)
                optimizer.step()
                step += 1
                final_loss = float(loss.detach())
                for dim, parts in breakdown.items():
                    entry = {"step": step, "dim": dim, **parts}
                    log.append(entry)
                    if log_fh:
                        log_fh.write(json.dumps(entry) + "\n")
                if config.max_steps is not None and step >= config.max_steps:
                    done = True
                    break
            if done:
                break
    finally:
        if log_fh:
            log_fh.close()
    model.eval()

    ckpt = None
    if checkpoint_path is not None:
        ckpt = Path(checkpoint_path)
        save_checkpoint(model, ckpt, extra={
            "train_config": config.audit_dict(),
            "split_seed": split.seed,
            "steps": step,
            "final_loss": final_loss,
        })
    return TrainResult(
        model=model, final_loss=final_loss, steps=step, log=log,
        checkpoint_path=ckpt, wall_seconds=time.time() - started,
    )


def trained_method(
    config: TrainConfig,
    manifest: list[AssetRecord],
    mos: list[MosRecord],
    store: ClipStore,
):
    """Wrap train-then-predict as a benchmark method (one fresh model per split)."""

    def method(test_assets: list[AssetRecord], split: SplitSpec) -> list[ScoreTriple]:
        result = train(config, split, manifest, mos, store)
        return predict_scores(result.model, test_assets, store, config)

    return method


def ablation_grid(
    base: TrainConfig,
    grid: list[str],
    splits: list[SplitSpec],
    manifest: list[AssetRecord],
    mos: list[MosRecord],
    store: ClipStore,
) -> tuple[dict[str, BenchmarkResult], dict[str, str]]:
    """Train and evaluate every branch-switch configuration on identical splits.

    A failing configuration is recorded and the grid continues.
    """
    if not grid:
        raise ValidationError("ablation grid is empty")
    results: dict[str, BenchmarkResult] = {}
    errors: dict[str, str] = {}
    for key in grid:
        try:
            config = replace(base, model=ablation_config(base.model, key))
            method = trained_method(config, manifest, mos, store)
            results[key] = run_benchmark(method, manifest, mos, splits, name=f"config-{key}")
        except Exception as exc:
            errors[key] = f"{type(exc).__name__}: {exc}"
    return results, errors
