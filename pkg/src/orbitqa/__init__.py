"""Multi-dimensional quality assessment of text-to-3D assets from orbit
projection videos: MOS label pipeline, frame sampling, three-branch
regressor, correlation benchmarking, and a rating-collection service."""

from .data import (
    AssetRecord,
    DIMENSIONS,
    MosRecord,
    RatingRecord,
    ScoreTriple,
    SplitSpec,
    load_manifest,
    load_mos,
    load_ratings,
    load_scores,
    make_splits,
)
from .metrics import evaluate, fit_logistic, krcc, plcc, srcc
from .subjective import compute_mos, detect_outliers, process_ratings, zscore_rescale

__version__ = "0.1.0"

__all__ = [
    "AssetRecord", "DIMENSIONS", "MosRecord", "RatingRecord", "ScoreTriple", "SplitSpec",
    "load_manifest", "load_mos", "load_ratings", "load_scores", "make_splits",
    "evaluate", "fit_logistic", "krcc", "plcc", "srcc",
    "compute_mos", "detect_outliers", "process_ratings", "zscore_rescale",
    "__version__",
]
