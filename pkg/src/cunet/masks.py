"""Ground-truth mask construction and mask application."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInput, ShapeError
from .types import ComplexSpec, Mask, MagSpec

IRM_EPS = 1e-8


def _check_linear_pair(source_mag: MagSpec, mix_mag: MagSpec):
    if source_mag.value_scale != "linear" or mix_mag.value_scale != "linear":
        raise InvalidInput("masks are defined on linear-scale magnitudes")
    if source_mag.shape != mix_mag.shape:
        raise ShapeError(
            f"source shape {source_mag.shape} != mixture shape {mix_mag.shape}"
        )


def ideal_ratio_mask(source_mag: MagSpec, mix_mag: MagSpec, instrument: int = 0) -> Mask:
    """|X| / (|Y| + eps), clamped to [0, 1].

    Phase cancellation can push the raw ratio above 1; clamping keeps the
    ground truth comparable with a sigmoid-bounded prediction.
    """
    _check_linear_pair(source_mag, mix_mag)
    ratio = source_mag.values / (mix_mag.values + IRM_EPS)
    return Mask(np.clip(ratio, 0.0, 1.0), kind="ratio", instrument=instrument)


def ideal_binary_mask(source_mag: MagSpec, mix_mag: MagSpec, instrument: int = 0) -> Mask:
    """1 where |X| / (|Y| - |X|) >= 1, else 0.

    Where the residual |Y| - |X| is non-positive the source dominates and the
    mask is 1 (the ratio itself is undefined there).
    """
    _check_linear_pair(source_mag, mix_mag)
    residual = mix_mag.values - source_mag.values
    on = (residual <= 0.0) | (source_mag.values >= residual)
    return Mask(on.astype(np.float64), kind="binary", instrument=instrument)


def apply_mask(mask: Mask, mixture: ComplexSpec) -> ComplexSpec:
    """Masked magnitude with the mixture phase: M * |Y| * exp(j * angle(Y))."""
    if mask.shape != mixture.shape:
        raise ShapeError(f"mask shape {mask.shape} != mixture shape {mixture.shape}")
    phase = np.exp(1j * np.angle(mixture.bins))
    bins = mask.values * np.abs(mixture.bins) * phase
    return ComplexSpec(
        bins, sample_rate=mixture.sample_rate, n_fft=mixture.n_fft, hop=mixture.hop
    )
