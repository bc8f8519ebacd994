import numpy as np
import pytest

from orbitqa.benchmark import significance_matrix
from orbitqa.data import AssetRecord, MosRecord, ValidationError
from orbitqa.plots import (
    plot_generator_bars,
    plot_mos_histograms,
    plot_prompt_length_bars,
    plot_significance,
)


def make_mos(n, seed=0):
    rng = np.random.default_rng(seed)
    return [MosRecord(f"a{i}", tuple(rng.uniform(10, 90, 3)), 17) for i in range(n)]


def make_manifest(n):
    gens = ["g1", "g2", "g3", "g4", "g5", "g6"]
    return [
        AssetRecord(f"a{i}", "word " * (i % 8 + 1) + "end", gens[i % 6], f"v{i}.mp4", 24, 64, 64)
        for i in range(n)
    ]


def test_histograms_one_file_per_dimension(tmp_path):
    paths = plot_mos_histograms(make_mos(60), tmp_path)
    assert len(paths) == 3
    assert all(p.exists() and p.stat().st_size > 0 for p in paths)


def test_single_record_degenerate_histogram(tmp_path):
    paths = plot_mos_histograms(make_mos(1), tmp_path)
    assert all(p.exists() for p in paths)


def test_empty_mos_errors(tmp_path):
    with pytest.raises(ValidationError):
        plot_mos_histograms([], tmp_path)


def test_generator_bars_six_groups(tmp_path):
    mos = make_mos(36)
    path = plot_generator_bars(mos, make_manifest(36), tmp_path)
    assert path.exists()


def test_prompt_length_bars(tmp_path):
    path = plot_prompt_length_bars(make_mos(36), make_manifest(36), tmp_path)
    assert path.exists()


def test_significance_figure(tmp_path):
    rng = np.random.default_rng(0)
    matrix = significance_matrix({
        "A": rng.normal(0, 1, 100),
        "B": rng.normal(0, 3, 100),
        "C": rng.normal(0, 1.05, 100),
    })
    path = plot_significance(matrix, tmp_path / "sig.png", title="quality")
    assert path.exists() and path.stat().st_size > 0
