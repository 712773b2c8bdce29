"""Training objectives on predicted masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidInput, ShapeError


@dataclass
class LossConfig:
    kind: str = "l2"  # l2 | bce
    lam: float = 1.0  # BCE positive-class weight
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if self.kind not in ("l2", "bce"):
            raise InvalidInput(f"unknown loss kind {self.kind!r}")
        if self.lam <= 0:
            raise InvalidInput("lambda must be positive")


def class_balance_lambda(gt: np.ndarray, lo: float = 1.0, hi: float = 20.0) -> float:
    """Negative/positive bin ratio of a binary target, clipped to [lo, hi]."""
    pos = float(np.count_nonzero(gt))
    neg = float(gt.size - pos)
    return float(np.clip(neg / max(pos, 1.0), lo, hi))


def bce_mask_loss(pred: ad.Tensor, gt: np.ndarray, lam: float = 1.0, clamp_eps: float = 1e-7) -> ad.Tensor:
    """Binary cross entropy summed over all mask bins.

    The positive term is weighted by ``lam`` to compensate for how sparse
    active bins are; predictions are clamped away from {0, 1} before the logs.
    """
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {gt.shape}")
    gt = gt.astype(pred.dtype, copy=False)
    p = ad.clamp(pred, clamp_eps, 1.0 - clamp_eps)
    pos = ad.mul(ad.log(p), ad.Tensor(lam * gt))
    negt = ad.mul(ad.log(ad.rsub(1.0, p)), ad.Tensor(1.0 - gt))
    return ad.neg(ad.tsum(ad.add(pos, negt)))


def l2_mask_loss(pred: ad.Tensor, gt: np.ndarray) -> ad.Tensor:
    """Squared L2 distance between predicted and target masks, summed."""
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {gt.shape}")
    diff = ad.sub(pred, ad.Tensor(gt.astype(pred.dtype, copy=False)))
    return ad.tsum(ad.mul(diff, diff))


def mask_loss(pred: ad.Tensor, gt: np.ndarray, cfg: LossConfig) -> ad.Tensor:
    if cfg.kind == "bce":
        return bce_mask_loss(pred, gt, cfg.lam, cfg.clamp_eps)
    return l2_mask_loss(pred, gt)
