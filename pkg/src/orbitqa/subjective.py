"""Raw rating processing: outlier detection, subject rejection, z-scoring, MOS.

The chain is detect_outliers -> drop flagged scores and rejected subjects ->
zscore_rescale -> compute_mos. Outlier screening runs on the raw scores so a
wild rating cannot contaminate the per-subject mean/std used for z-scoring.

Conventions (chosen once, used everywhere):
  * standard deviations are sample (n-1) deviations;
  * kurtosis is the non-excess fourth standardized moment, i.e. the
    n-denominator fourth central moment divided by the (n-1) sample std to
    the fourth; samples with kurtosis in [2, 4] count as Gaussian.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .data import DIMENSIONS, MosRecord, RatingRecord, ValidationError

# (subject_id, asset_id, dimension index)
FlagTriple = tuple[str, str, int]


@dataclass(frozen=True)
class SubjectStats:
    """Per-subject rating statistics over everything that subject rated."""

    subject_id: str
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    outlier_rate: tuple[float, float, float]

    def __post_init__(self):
        if any(s < 0 for s in self.std):
            raise ValidationError(f"subject {self.subject_id}: negative std")


@dataclass
class OutlierReport:
    """Everything the screening pass decided, for auditing and reuse."""

    # (asset_id, dim) -> "gaussian" | "non_gaussian"
    distribution_class: dict[tuple[str, int], str]
    flagged: list[FlagTriple]
    rejected_subjects: list[str]
    subject_stats: list[SubjectStats] = field(default_factory=list)
    # fraction of scalar ratings flagged, and fraction of subjects rejected
    rating_discard_fraction: float = 0.0
    subject_discard_fraction: float = 0.0

    @property
    def flagged_set(self) -> frozenset[FlagTriple]:
        return frozenset(self.flagged)


@dataclass(frozen=True)
class ZPrimeRecord:
    """Rescaled z-scores for one (subject, asset); None where the score was discarded."""

    subject_id: str
    asset_id: str
    zprime: tuple[float | None, float | None, float | None]


def sample_kurtosis(values: np.ndarray) -> float:
    """Non-excess fourth standardized moment with the (n-1) sample std."""
    v = np.asarray(values, dtype=float)
    m = v.mean()
    s = v.std(ddof=1)
    if s == 0.0:
        return float("nan")
    return float(((v - m) ** 4).mean() / s**4)


@dataclass(frozen=True)
class ScreenResult:
    kurtosis: float
    distribution_class: str  # "gaussian" | "non_gaussian"
    flagged: tuple[bool, ...]


def screen_scores(
    values: np.ndarray,
    gaussian_k: float = 2.0,
    non_gaussian_k: float = math.sqrt(20.0),
) -> ScreenResult:
    """Outlier decision for one (asset, dimension) sample of raw scores."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise ValidationError("need at least 2 scores to screen a sample")
    kurt = sample_kurtosis(v)
    gaussian = 2.0 <= kurt <= 4.0  # NaN (zero-std) samples take the non-gaussian branch
    k = gaussian_k if gaussian else non_gaussian_k
    std = v.std(ddof=1)
    if std == 0.0:
        flags = tuple(False for _ in v)
    else:
        flags = tuple(bool(abs(x - v.mean()) > k * std) for x in v)
    return ScreenResult(
        kurtosis=kurt,
        distribution_class="gaussian" if gaussian else "non_gaussian",
        flagged=flags,
    )


def detect_outliers(
    ratings: list[RatingRecord],
    gaussian_k: float = 2.0,
    non_gaussian_k: float = math.sqrt(20.0),
    subject_reject_rate: float = 0.03,
) -> OutlierReport:
    """Screen raw ratings per (asset, dimension) and reject unreliable subjects.

    A score is flagged when it sits more than k sample standard deviations
    from the per-asset mean, with k = gaussian_k for samples whose kurtosis
    falls in [2, 4] and k = non_gaussian_k otherwise. A subject whose flagged
    fraction exceeds subject_reject_rate in any dimension is rejected.
    """
    by_asset: dict[str, list[RatingRecord]] = defaultdict(list)
    for rec in ratings:
        by_asset[rec.asset_id].append(rec)

    for asset_id, recs in by_asset.items():
        if len(recs) < 2:
            raise ValidationError(
                f"asset {asset_id!r} has {len(recs)} rating(s); need >= 2 per dimension to screen outliers"
            )

    distribution_class: dict[tuple[str, int], str] = {}
    flagged: list[FlagTriple] = []
    rated_count: dict[str, int] = defaultdict(int)
    flag_count: dict[str, np.ndarray] = defaultdict(lambda: np.zeros(3, dtype=int))

    for asset_id, recs in by_asset.items():
        scores = np.array([r.scores for r in recs], dtype=float)  # (n_subj, 3)
        for d in range(3):
            screen = screen_scores(scores[:, d], gaussian_k, non_gaussian_k)
            distribution_class[(asset_id, d)] = screen.distribution_class
            for rec, is_outlier in zip(recs, screen.flagged):
                if is_outlier:
                    flagged.append((rec.subject_id, asset_id, d))
                    flag_count[rec.subject_id][d] += 1
        for rec in recs:
            rated_count[rec.subject_id] += 1

    rejected = []
    for subject_id in sorted(rated_count):
        rates = flag_count[subject_id] / rated_count[subject_id]
        if np.any(rates > subject_reject_rate):
            rejected.append(subject_id)

    stats = []
    by_subject: dict[str, list[RatingRecord]] = defaultdict(list)
    for rec in ratings:
        by_subject[rec.subject_id].append(rec)
    for subject_id in sorted(by_subject):
        scores = np.array([r.scores for r in by_subject[subject_id]], dtype=float)
        n = rated_count[subject_id]
        stats.append(SubjectStats(
            subject_id=subject_id,
            mean=tuple(scores.mean(axis=0)),
            std=tuple(scores.std(axis=0, ddof=1)) if len(scores) > 1 else (0.0, 0.0, 0.0),
            outlier_rate=tuple(flag_count[subject_id] / n),
        ))

    total_scalars = 3 * len(ratings)
    return OutlierReport(
        distribution_class=distribution_class,
        flagged=flagged,
        rejected_subjects=rejected,
        subject_stats=stats,
        rating_discard_fraction=len(flagged) / total_scalars if total_scalars else 0.0,
        subject_discard_fraction=len(rejected) / len(by_subject) if by_subject else 0.0,
    )


def zscore_rescale(
    ratings: list[RatingRecord],
    valid_subjects: list[str],
    exclude: frozenset[FlagTriple] = frozenset(),
) -> list[ZPrimeRecord]:
    """Convert surviving raw scores to rescaled z-scores.

    Each subject is standardized against their own per-dimension mean and
    sample std over every asset they rated (post-screening), then mapped to
    the nominal [0,100] scale via z' = 100*(z + 3)/6. Values are not clamped.
    """
    valid = set(valid_subjects)
    per_subject: dict[str, list[RatingRecord]] = defaultdict(list)
    for rec in ratings:
        if rec.subject_id in valid:
            per_subject[rec.subject_id].append(rec)

    mu: dict[str, np.ndarray] = {}
    sigma: dict[str, np.ndarray] = {}
    for subject_id, recs in per_subject.items():
        cols: list[list[float]] = [[], [], []]
        for rec in recs:
            for d in range(3):
                if (rec.subject_id, rec.asset_id, d) not in exclude:
                    cols[d].append(rec.scores[d])
        means = np.zeros(3)
        stds = np.zeros(3)
        for d in range(3):
            if len(cols[d]) < 2:
                raise ValidationError(
                    f"subject {subject_id!r} has {len(cols[d])} surviving {DIMENSIONS[d]} score(s); "
                    "cannot standardize"
                )
            arr = np.asarray(cols[d])
            means[d] = arr.mean()
            stds[d] = arr.std(ddof=1)
            if stds[d] == 0.0:
                raise ValidationError(
                    f"subject {subject_id!r} has zero {DIMENSIONS[d]} std; "
                    "reject this subject before z-scoring (division undefined)"
                )
        mu[subject_id] = means
        sigma[subject_id] = stds

    out: list[ZPrimeRecord] = []
    for rec in ratings:
        if rec.subject_id not in valid:
            continue
        vals: list[float | None] = []
        for d in range(3):
            if (rec.subject_id, rec.asset_id, d) in exclude:
                vals.append(None)
            else:
                z = (rec.scores[d] - mu[rec.subject_id][d]) / sigma[rec.subject_id][d]
                vals.append(100.0 * (z + 3.0) / 6.0)
        out.append(ZPrimeRecord(rec.subject_id, rec.asset_id, (vals[0], vals[1], vals[2])))
    return out


def compute_mos(
    z_primes: list[ZPrimeRecord],
    n_outliers_removed: dict[str, tuple[int, int, int]] | None = None,
) -> list[MosRecord]:
    """Average rescaled z-scores over subjects, per asset and dimension."""
    by_asset: dict[str, list[ZPrimeRecord]] = defaultdict(list)
    for rec in z_primes:
        by_asset[rec.asset_id].append(rec)

    records = []
    for asset_id in sorted(by_asset):
        recs = by_asset[asset_id]
        mos = []
        for d in range(3):
            vals = [r.zprime[d] for r in recs if r.zprime[d] is not None]
            if not vals:
                raise ValidationError(f"asset {asset_id!r} has zero valid {DIMENSIONS[d]} ratings")
            mos.append(float(np.mean(vals)))
        n_valid = sum(1 for r in recs if any(v is not None for v in r.zprime))
        removed = (0, 0, 0) if n_outliers_removed is None else n_outliers_removed.get(asset_id, (0, 0, 0))
        records.append(MosRecord(
            asset_id=asset_id,
            mos=(mos[0], mos[1], mos[2]),
            n_valid_subjects=n_valid,
            n_outliers_removed=removed,
        ))
    return records


def process_ratings(
    ratings: list[RatingRecord],
    gaussian_k: float = 2.0,
    non_gaussian_k: float = math.sqrt(20.0),
    subject_reject_rate: float = 0.03,
) -> tuple[list[MosRecord], OutlierReport]:
    """Full pipeline from raw ratings to MOS records plus the screening report."""
    report = detect_outliers(
        ratings,
        gaussian_k=gaussian_k,
        non_gaussian_k=non_gaussian_k,
        subject_reject_rate=subject_reject_rate,
    )
    rejected = set(report.rejected_subjects)
    valid_subjects = sorted({r.subject_id for r in ratings} - rejected)
    if not valid_subjects:
        raise ValidationError("every subject was rejected; nothing left to average")

    z_primes = zscore_rescale(ratings, valid_subjects, exclude=report.flagged_set)

    removed: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for subject_id, asset_id, d in report.flagged:
        removed[asset_id][d] += 1
    for rec in ratings:
        if rec.subject_id in rejected:
            for d in range(3):
                if (rec.subject_id, rec.asset_id, d) not in report.flagged_set:
                    removed[rec.asset_id][d] += 1

    mos = compute_mos(z_primes, {k: tuple(v) for k, v in removed.items()})
    return mos, report
