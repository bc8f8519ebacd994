"""Correlation criteria and the five-parameter logistic score alignment.

SRCC and KRCC are computed on raw predictions; PLCC is computed after the
monotone logistic mapping has absorbed scale differences between predicted
scores and MOS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .data import DIMENSIONS, MosRecord, ScoreTriple, ValidationError


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or len(x) != len(y):
        raise ValidationError("inputs must be 1-D vectors of equal length")
    if len(x) < 2:
        raise ValidationError("need at least 2 points")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ValidationError("correlation undefined for a constant vector")
    return x, y


def midranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their rank block."""
    v = np.asarray(v, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v), dtype=float)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def plcc(x, y) -> float:
    """Pearson linear correlation coefficient."""
    x, y = _check_pair(x, y)
    xd = x - x.mean()
    yd = y - y.mean()
    sxx = float(xd @ xd)
    syy = float(yd @ yd)
    if sxx == 0.0 or syy == 0.0:
        # non-constant by ptp, but centering cancelled to zero at float precision
        raise ValidationError("correlation undefined: zero variance at floating-point precision")
    return float((xd @ yd) / np.sqrt(sxx * syy))


def srcc(x, y) -> float:
    """Spearman rank-order correlation: Pearson correlation of mid-ranks."""
    x, y = _check_pair(x, y)
    return plcc(midranks(x), midranks(y))


def krcc(x, y) -> float:
    """Kendall rank-order correlation, tau-b (tie corrected)."""
    x, y = _check_pair(x, y)
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(len(x), k=1)
    s = float((dx[iu] * dy[iu]).sum())  # concordant minus discordant
    n0 = len(x) * (len(x) - 1) / 2
    n1 = sum(t * (t - 1) / 2 for t in np.unique(x, return_counts=True)[1])
    n2 = sum(t * (t - 1) / 2 for t in np.unique(y, return_counts=True)[1])
    denom = np.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0.0:
        raise ValidationError("KRCC undefined: all pairs tied in one input")
    return s / denom


@dataclass(frozen=True)
class LogisticParams:
    beta: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.beta) != 5 or not all(np.isfinite(b) for b in self.beta):
            raise ValidationError("logistic parameters must be 5 finite reals")


@dataclass(frozen=True)
class LogisticFit:
    params: LogisticParams
    mapped: np.ndarray
    converged: bool
    sse: float


def logistic5(beta, y) -> np.ndarray:
    """beta1*(0.5 - 1/(1+exp(beta2*(y-beta3)))) + beta4*y + beta5."""
    b1, b2, b3, b4, b5 = beta
    arg = np.clip(b2 * (np.asarray(y, dtype=float) - b3), -500.0, 500.0)
    return b1 * (0.5 - 1.0 / (1.0 + np.exp(arg))) + b4 * np.asarray(y, dtype=float) + b5


def fit_logistic(pred, mos, max_iter: int = 4000) -> LogisticFit:
    """Least-squares fit of the five-parameter monotone mapping.

    Deterministic: simplex descent from three fixed starts (beta3 at the min,
    mean, and max of the predictions; beta1 at the label range; beta4/beta5
    from the affine fit), each polished by one restart from its optimum.
    """
    pred = np.asarray(pred, dtype=float)
    mos = np.asarray(mos, dtype=float)
    if len(pred) != len(mos):
        raise ValidationError("pred and mos must have equal length")
    if len(pred) < 5:
        raise ValidationError("need at least 5 points to fit 5 parameters")
    if np.ptp(pred) == 0.0:
        raise ValidationError("cannot fit the mapping on constant predictions")

    slope, intercept = np.polyfit(pred, mos, 1)
    b1 = float(np.ptp(mos))

    def sse(beta):
        r = logistic5(beta, pred) - mos
        return float(r @ r)

    best = None
    for b3 in (pred.min(), pred.mean(), pred.max()):
        start = np.array([b1, 1.0, b3, slope, intercept])
        res = minimize(sse, start, method="Nelder-Mead",
                       options=dict(maxiter=max_iter, maxfev=max_iter, xatol=1e-10, fatol=1e-12))
        res2 = minimize(sse, res.x, method="Nelder-Mead",
                        options=dict(maxiter=max_iter, maxfev=max_iter, xatol=1e-12, fatol=1e-14))
        cand = res2 if res2.fun <= res.fun else res
        if best is None or cand.fun < best.fun:
            best = cand
    params = LogisticParams(tuple(float(b) for b in best.x))
    return LogisticFit(
        params=params,
        mapped=logistic5(best.x, pred),
        converged=bool(best.success),
        sse=float(best.fun),
    )


@dataclass(frozen=True)
class DimensionEval:
    srcc: float
    krcc: float
    plcc: float
    fit_converged: bool = True


def align_by_asset(
    preds: list[ScoreTriple], labels: list[MosRecord]
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Match predictions to labels by asset_id; error on any mismatch."""
    pred_by_id = {p.asset_id: p for p in preds}
    label_ids = [m.asset_id for m in labels]
    if len(pred_by_id) != len(preds):
        raise ValidationError("duplicate asset_id in predictions")
    missing = [a for a in label_ids if a not in pred_by_id]
    extra = [p.asset_id for p in preds if p.asset_id not in set(label_ids)]
    if missing or extra:
        raise ValidationError(f"prediction/label misalignment: missing={missing[:5]}, extra={extra[:5]}")
    p = np.array([pred_by_id[a].as_tuple() for a in label_ids], dtype=float)
    m = np.array([rec.mos for rec in labels], dtype=float)
    return p, m, label_ids


def evaluate(preds: list[ScoreTriple], labels: list[MosRecord]) -> dict[str, DimensionEval]:
    """Per-dimension SRCC/KRCC on raw predictions and PLCC after logistic mapping."""
    p, m, _ = align_by_asset(preds, labels)
    if len(p) < 5:
        raise ValidationError("need at least 5 aligned items to evaluate")
    out = {}
    for d, dim in enumerate(DIMENSIONS):
        fit = fit_logistic(p[:, d], m[:, d])
        out[dim] = DimensionEval(
            srcc=srcc(p[:, d], m[:, d]),
            krcc=krcc(p[:, d], m[:, d]),
            plcc=plcc(fit.mapped, m[:, d]),
            fit_converged=fit.converged,
        )
    return out
