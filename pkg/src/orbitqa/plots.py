"""Report figures: MOS distributions, per-generator and prompt-length views,
benchmark summaries, significance verdict grids. All figures render to files."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .benchmark import BenchmarkResult, INFERIOR, SUPERIOR, SignificanceMatrix
from .data import AssetRecord, DIMENSIONS, MosRecord, ValidationError


def plot_mos_histograms(mos: list[MosRecord], out_dir: str | Path, bins: int = 20) -> list[Path]:
    """One histogram image per rated dimension."""
    if not mos:
        raise ValidationError("no MOS records to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    values = np.array([rec.mos for rec in mos])
    paths = []
    for d, dim in enumerate(DIMENSIONS):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        ax.hist(values[:, d], bins=min(bins, max(1, len(mos))), color="#4878a8", edgecolor="white")
        ax.set_xlabel(f"{dim} MOS")
        ax.set_ylabel("assets")
        ax.set_title(f"{dim.capitalize()} MOS distribution")
        fig.tight_layout()
        path = out_dir / f"mos_hist_{dim}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def _grouped_bars(groups: dict[str, np.ndarray], ylabel: str, title: str, path: Path) -> Path:
    names = list(groups)
    means = np.array([groups[g].mean(axis=0) for g in names])  # (n_groups, 3)
    x = np.arange(len(names))
    width = 0.26
    fig, ax = plt.subplots(figsize=(max(5.0, 1.2 * len(names)), 3.4))
    for d, dim in enumerate(DIMENSIONS):
        ax.bar(x + (d - 1) * width, means[:, d], width, label=dim)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_generator_bars(mos: list[MosRecord], manifest: list[AssetRecord], out_dir: str | Path) -> Path:
    """Mean MOS per generator tag, three bars per group."""
    if not mos:
        raise ValidationError("no MOS records to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gen_by_id = {a.asset_id: a.generator for a in manifest}
    groups: dict[str, list] = defaultdict(list)
    for rec in mos:
        groups[gen_by_id.get(rec.asset_id, "unknown")].append(rec.mos)
    arrays = {g: np.array(v) for g, v in sorted(groups.items())}
    return _grouped_bars(arrays, "mean MOS", "MOS by generator", Path(out_dir) / "mos_by_generator.png")


def plot_prompt_length_bars(
    mos: list[MosRecord], manifest: list[AssetRecord], out_dir: str | Path, n_bins: int = 6
) -> Path:
    """Mean MOS across prompt-length bins (shortest to longest, equal-width)."""
    if not mos:
        raise ValidationError("no MOS records to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    len_by_id = {a.asset_id: len(a.prompt.split()) for a in manifest}
    lengths = np.array([len_by_id.get(rec.asset_id, 0) for rec in mos], dtype=float)
    lo, hi = lengths.min(), lengths.max()
    edges = np.linspace(lo, hi + 1e-9, n_bins + 1)
    groups: dict[str, list] = {}
    for b in range(n_bins):
        mask = (lengths >= edges[b]) & (lengths < edges[b + 1])
        if mask.any():
            groups[str(b + 1)] = np.array([mos[i].mos for i in np.flatnonzero(mask)])
    return _grouped_bars(groups, "mean MOS", "MOS by prompt length bin", Path(out_dir) / "mos_by_prompt_length.png")


def plot_benchmark_summary(results: list[BenchmarkResult], out_dir: str | Path) -> Path:
    """Mean SRCC per method and dimension."""
    if not results:
        raise ValidationError("no benchmark results to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = {
        r.method: np.array([[r.mean("srcc", dim) for dim in DIMENSIONS]])
        for r in results
    }
    return _grouped_bars(groups, "mean SRCC over splits", "Benchmark summary", Path(out_dir) / "benchmark_srcc.png")


def plot_significance(matrix: SignificanceMatrix, path: str | Path, title: str = "") -> Path:
    """Verdict grid: white = row superior, black = row inferior, gray = indistinguishable."""
    path = Path(path)
    n = len(matrix.methods)
    img = np.full((n, n), 0.5)
    for i in range(n):
        for j in range(n):
            if matrix.verdicts[i][j] == SUPERIOR:
                img[i, j] = 1.0
            elif matrix.verdicts[i][j] == INFERIOR:
                img[i, j] = 0.0
    fig, ax = plt.subplots(figsize=(0.5 * n + 2.2, 0.5 * n + 2.0))
    ax.imshow(img, cmap="gray", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(matrix.methods, rotation=90, fontsize=7)
    ax.set_yticklabels(matrix.methods, fontsize=7)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
