"""Repeated-split benchmarking and pairwise statistical significance.

A "method" is anything that yields a ScoreTriple per test asset: a callable
(receives the test asset records and the split, so trained predictors can be
plugged in), a mapping from asset_id to scores, or a score file on disk.
Baselines computed elsewhere enter through score files; nothing here
re-implements them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import scipy.stats

from .data import (
    AssetRecord,
    DIMENSIONS,
    MosRecord,
    ScoreTriple,
    SplitSpec,
    ValidationError,
    load_scores,
)
from .metrics import fit_logistic, krcc, plcc, srcc

MethodLike = Callable[[list[AssetRecord], SplitSpec], list[ScoreTriple]] | Mapping[str, ScoreTriple] | str | Path

SUPERIOR = "superior"
INFERIOR = "inferior"
INDISTINGUISHABLE = "indistinguishable"


@dataclass
class SplitEval:
    seed: int
    srcc: dict[str, float]
    krcc: dict[str, float]
    plcc: dict[str, float]


@dataclass
class BenchmarkResult:
    method: str
    splits: list[SplitEval]
    # dim -> pooled (asset_id, residual-after-mapping) across all splits' test sets
    residual_ids: dict[str, list[str]] = field(default_factory=dict)
    residuals: dict[str, list[float]] = field(default_factory=dict)
    grouped_by_prompt: bool = False

    @property
    def split_seeds(self) -> list[int]:
        return [s.seed for s in self.splits]

    def mean(self, metric: str, dim: str) -> float:
        return float(np.mean([getattr(s, metric)[dim] for s in self.splits]))

    def summary(self) -> dict[str, dict[str, float]]:
        return {
            dim: {m: self.mean(m, dim) for m in ("srcc", "krcc", "plcc")}
            for dim in DIMENSIONS
        }

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "grouped_by_prompt": self.grouped_by_prompt,
            "split_seeds": self.split_seeds,
            "mean": self.summary(),
            "per_split": [
                {"seed": s.seed, "srcc": s.srcc, "krcc": s.krcc, "plcc": s.plcc}
                for s in self.splits
            ],
            "residual_ids": self.residual_ids,
            "residuals": self.residuals,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BenchmarkResult":
        return cls(
            method=obj["method"],
            splits=[SplitEval(seed=s["seed"], srcc=s["srcc"], krcc=s["krcc"], plcc=s["plcc"])
                    for s in obj["per_split"]],
            residual_ids=obj.get("residual_ids", {}),
            residuals=obj.get("residuals", {}),
            grouped_by_prompt=obj.get("grouped_by_prompt", False),
        )


def _as_method(method: MethodLike) -> Callable[[list[AssetRecord], SplitSpec], list[ScoreTriple]]:
    if callable(method):
        return method
    if isinstance(method, (str, Path)):
        table = {s.asset_id: s for s in load_scores(method)}
    else:
        table = dict(method)

    def lookup(assets: list[AssetRecord], split: SplitSpec) -> list[ScoreTriple]:
        missing = [a.asset_id for a in assets if a.asset_id not in table]
        if missing:
            raise ValidationError(f"method has no score for test assets {missing[:10]}")
        return [table[a.asset_id] for a in assets]

    return lookup


def _map_predictions(pred: np.ndarray, mos: np.ndarray) -> np.ndarray:
    """Score alignment before PLCC: the 5-parameter fit, or its affine
    sub-model when the test set is below the fit's 5-point minimum."""
    if len(pred) >= 5:
        return fit_logistic(pred, mos).mapped
    slope, intercept = np.polyfit(pred, mos, 1)
    return slope * pred + intercept


def run_benchmark(
    method: MethodLike,
    manifest: list[AssetRecord],
    mos: list[MosRecord],
    splits: list[SplitSpec],
    name: str = "method",
) -> BenchmarkResult:
    """Evaluate a method on every split's test set and pool residuals for the F-test."""
    fn = _as_method(method)
    assets_by_id = {a.asset_id: a for a in manifest}
    mos_by_id = {m.asset_id: m for m in mos}

    result = BenchmarkResult(
        method=name,
        splits=[],
        residual_ids={dim: [] for dim in DIMENSIONS},
        residuals={dim: [] for dim in DIMENSIONS},
        grouped_by_prompt=any(s.grouped_by_prompt for s in splits),
    )
    for split in splits:
        test_assets = [assets_by_id[a] for a in split.test_ids]
        preds = fn(test_assets, split)
        pred_by_id = {p.asset_id: p for p in preds}
        missing = [a for a in split.test_ids if a not in pred_by_id]
        if missing:
            raise ValidationError(f"method {name!r} missing test assets {missing[:10]}")
        p = np.array([pred_by_id[a].as_tuple() for a in split.test_ids])
        m = np.array([mos_by_id[a].mos for a in split.test_ids])
        ev = SplitEval(seed=split.seed, srcc={}, krcc={}, plcc={})
        for d, dim in enumerate(DIMENSIONS):
            ev.srcc[dim] = srcc(p[:, d], m[:, d])  # raises on constant inputs before mapping
            ev.krcc[dim] = krcc(p[:, d], m[:, d])
            mapped = _map_predictions(p[:, d], m[:, d])
            ev.plcc[dim] = plcc(mapped, m[:, d])
            result.residual_ids[dim].extend(split.test_ids)
            result.residuals[dim].extend((mapped - m[:, d]).tolist())
        result.splits.append(ev)
    return result


def save_report(results: list[BenchmarkResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"methods": [r.to_dict() for r in results]}, fh, indent=2)


def load_report(path: str | Path) -> list[BenchmarkResult]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return [BenchmarkResult.from_dict(obj) for obj in payload["methods"]]


@dataclass
class SignificanceMatrix:
    methods: list[str]
    # verdicts[i][j]: is method i superior/inferior/indistinguishable vs method j
    verdicts: list[list[str]]
    f_statistics: list[list[float]]

    def verdict(self, a: str, b: str) -> str:
        return self.verdicts[self.methods.index(a)][self.methods.index(b)]


def significance_matrix(
    residuals: Mapping[str, "np.ndarray | list[float]"],
    confidence: float = 0.95,
) -> SignificanceMatrix:
    """Pairwise variance-ratio F-test on mapping residuals.

    Row verdict "superior" means the row method's residual variance is
    significantly smaller than the column method's at the given confidence;
    the matrix is antisymmetric by construction.
    """
    methods = list(residuals)
    if len(methods) < 2:
        raise ValidationError("need at least 2 methods to compare")
    arrays = {m: np.asarray(residuals[m], dtype=float) for m in methods}
    lengths = {len(a) for a in arrays.values()}
    if len(lengths) != 1:
        raise ValidationError(f"residual vectors differ in length: { {m: len(a) for m, a in arrays.items()} }")

    alpha = 1.0 - confidence
    n = len(methods)
    verdicts = [[INDISTINGUISHABLE] * n for _ in range(n)]
    fstats = [[1.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            a, b = arrays[methods[i]], arrays[methods[j]]
            va, vb = a.var(ddof=1), b.var(ddof=1)
            if vb == 0.0 and va == 0.0:
                continue
            f = np.inf if vb == 0.0 else va / vb
            fstats[i][j] = float(f)
            dfa, dfb = len(a) - 1, len(b) - 1
            lo = scipy.stats.f.ppf(alpha / 2.0, dfa, dfb)
            hi = scipy.stats.f.ppf(1.0 - alpha / 2.0, dfa, dfb)
            if f < lo:
                verdicts[i][j] = SUPERIOR
            elif f > hi:
                verdicts[i][j] = INFERIOR
    return SignificanceMatrix(methods=methods, verdicts=verdicts, f_statistics=fstats)
