"""Iterative single-channel Wiener post-filtering of per-source magnitude estimates.

Each iteration redistributes the complex mixture across the sources using
power-ratio gains, then re-reads the magnitudes. One or more iterations make
the source estimates sum to (almost exactly) the mixture, which suppresses
leakage into to-be-silent sources at the cost of some added filtering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ShapeError
from .types import ComplexSpec, MagSpec


@dataclass
class WienerConfig:
    iterations: int = 1
    eps: float = 1e-10

    def __post_init__(self):
        if self.iterations < 0:
            raise InvalidInput("iterations must be >= 0")


def wiener_filter(est_mags, mixture: ComplexSpec, cfg: WienerConfig = WienerConfig()):
    """Refine per-source complex spectra from magnitude estimates.

    With zero iterations each source is just its magnitude with the mixture
    phase. Every iteration computes gains W_i = v_i^2 / (sum_j v_j^2 + eps),
    applies them to the complex mixture, and updates v from the result.

    Returns a list of ComplexSpec, one per source.
    """
    mags = []
    for m in est_mags:
        values = m.values if isinstance(m, MagSpec) else np.asarray(m, dtype=np.float64)
        if isinstance(m, MagSpec) and m.value_scale != "linear":
            raise InvalidInput("wiener filtering expects linear-scale magnitudes")
        if values.shape != mixture.shape:
            raise ShapeError(
                f"estimate shape {values.shape} != mixture shape {mixture.shape}"
            )
        if np.any(values < 0):
            raise InvalidInput("magnitude estimates must be non-negative")
        mags.append(values)
    v = np.stack(mags)
    phase = np.exp(1j * np.angle(mixture.bins))
    spectra = v * phase[None]
    for _ in range(cfg.iterations):
        power = v * v
        gains = power / (power.sum(axis=0, keepdims=True) + cfg.eps)
        spectra = gains * mixture.bins[None]
        v = np.abs(spectra)
    return [
        ComplexSpec(s, sample_rate=mixture.sample_rate, n_fft=mixture.n_fft, hop=mixture.hop)
        for s in spectra
    ]
