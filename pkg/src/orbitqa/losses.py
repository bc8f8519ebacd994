"""Training objective: per-dimension linearity loss plus rank loss.

The linearity term z-scores both prediction and label batches (population
std, so a perfect batch scores exactly zero) and penalizes both the direct
residual and the residual of the correlation-scaled prediction. The rank
term defaults to the pairwise sign-hinge monotonicity penalty; the literal
elementwise absolute-error form it algebraically reduces to is kept behind
a flag for fidelity comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .data import MosRecord, ScoreTriple, ValidationError

PAIRWISE_SIGN_HINGE = "pairwise_sign_hinge"
LITERAL_EQ10 = "literal_eq10"

DIM_KEYS = ("q", "a", "c")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.3
    rank_variant: str = PAIRWISE_SIGN_HINGE
    reduction: str = "mean"

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError("lambda must be >= 0")
        if self.rank_variant not in (PAIRWISE_SIGN_HINGE, LITERAL_EQ10):
            raise ValidationError(f"unknown rank variant {self.rank_variant!r}")
        if self.reduction != "mean":
            raise ValidationError("only mean reduction is supported")


def _check_batch(pred: torch.Tensor, label: torch.Tensor) -> None:
    if pred.shape != label.shape or pred.dim() != 1:
        raise ValidationError("pred and label must be 1-D tensors of equal length")
    if pred.numel() < 2:
        raise ValidationError("batch of 1 is not enough; losses need >= 2 samples")


def _zscore(v: torch.Tensor) -> torch.Tensor:
    # population (n) std: a perfect batch must score exactly zero
    return (v - v.mean()) / v.std(unbiased=False)


def linearity_loss(pred: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    """MSE with batch z-score normalization plus the correlation-scaled residual."""
    _check_batch(pred, label)
    if torch.all(label == label[0]):
        raise ValidationError("constant label batch: z-score undefined")
    s_hat = _zscore(pred)
    s = _zscore(label)
    rho = (s_hat * s).mean()
    return 0.5 * (((s_hat - s) ** 2).mean() + ((rho * s_hat - s) ** 2).mean())


def rank_loss(pred: torch.Tensor, label: torch.Tensor, variant: str = PAIRWISE_SIGN_HINGE) -> torch.Tensor:
    _check_batch(pred, label)
    if variant == LITERAL_EQ10:
        return (pred - label).abs().mean()
    if variant != PAIRWISE_SIGN_HINGE:
        raise ValidationError(f"unknown rank variant {variant!r}")
    diff = pred.unsqueeze(1) - pred.unsqueeze(0)          # Q_i - Q_j over ordered pairs
    sign = torch.sign(label.unsqueeze(1) - label.unsqueeze(0))
    hinge = torch.clamp(-diff * sign, min=0.0)
    n = pred.numel()
    return hinge.sum() / (n * (n - 1))  # diagonal terms are zero; mean over ordered pairs


def total_loss(
    pred: torch.Tensor,
    label: torch.Tensor,
    config: LossConfig = LossConfig(),
) -> tuple[torch.Tensor, dict[str, dict[str, float]]]:
    """Sum over the three dimensions of linearity + lambda * rank.

    pred and label are (batch, 3) tensors in the fixed dimension order.
    Returns the scalar loss and a per-dimension breakdown for logging.
    """
    if pred.shape != label.shape or pred.dim() != 2 or pred.shape[1] != 3:
        raise ValidationError("pred and label must both be (batch, 3)")
    total = pred.new_zeros(())
    breakdown: dict[str, dict[str, float]] = {}
    for d, key in enumerate(DIM_KEYS):
        lin = linearity_loss(pred[:, d], label[:, d])
        rank = rank_loss(pred[:, d], label[:, d], config.rank_variant)
        total = total + lin + config.lam * rank
        breakdown[key] = {
            "lin": float(lin.detach()),
            "rank": float(rank.detach()),
            "total": float((lin + config.lam * rank).detach()),
        }
    return total, breakdown


def total_loss_records(
    preds: list[ScoreTriple],
    labels: list[MosRecord],
    config: LossConfig = LossConfig(),
) -> tuple[torch.Tensor, dict[str, dict[str, float]]]:
    """total_loss over record lists, checking asset alignment first."""
    pred_ids = [p.asset_id for p in preds]
    label_ids = [m.asset_id for m in labels]
    if pred_ids != label_ids:
        raise ValidationError(f"asset_id mismatch between preds and labels: {pred_ids[:3]} vs {label_ids[:3]}")
    p = torch.tensor([p.as_tuple() for p in preds], dtype=torch.float64)
    m = torch.tensor([m.mos for m in labels], dtype=torch.float64)
    return total_loss(p, m, config)
