"""Inference: mixture waveform -> per-instrument stems.

Audio is processed in hop-aligned segments matching the training geometry
(65535 samples -> 512 x 256 bins). Predicted masks are mapped back to the
linear frequency grid when the model consumed log-warped input, applied with
the mixture phase, optionally Wiener-refined, and resynthesized.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import dsp
from .errors import InvalidInput
from .masks import apply_mask
from .model import Model, motion_context, pool_visual_context
from .presets import ExperimentPreset
from .types import (
    N_INSTRUMENTS,
    SAMPLE_RATE,
    SEGMENT_SAMPLES,
    ContextVector,
    MagSpec,
    Mask,
    Waveform,
)
from .wiener import WienerConfig, wiener_filter


def context_from_labels(labels) -> ContextVector:
    from .types import label_vector

    return ContextVector("label", label_vector(labels))


def context_from_features(model: Model, features: np.ndarray) -> ContextVector:
    """Build the configured visual or motion context from (K', T, dim) features."""
    kind = model.config.context_kind
    if kind == "visual":
        return pool_visual_context(features[:, 0])
    if kind == "motion":
        return motion_context(
            features, model.config.motion_mode, encoder=model.motion_encoder
        )
    raise InvalidInput(f"model does not take {kind!r} feature context")


def separate(
    model: Model,
    preset: ExperimentPreset,
    mixture: Waveform,
    context: ContextVector | None = None,
    wiener_iterations: int = 0,
) -> list:
    """Split a mixture into the 13 canonical instrument stems."""
    if mixture.sample_rate != SAMPLE_RATE:
        mixture = dsp.resample(mixture, SAMPLE_RATE)
    total = len(mixture)
    if total == 0:
        raise InvalidInput("cannot separate an empty waveform")
    stems = np.zeros((N_INSTRUMENTS, total))
    wiener_cfg = WienerConfig(iterations=wiener_iterations)
    for start in range(0, total, SEGMENT_SAMPLES):
        chunk = mixture.samples[start : start + SEGMENT_SAMPLES]
        n = len(chunk)
        if n < SEGMENT_SAMPLES:
            chunk = np.pad(chunk, (0, SEGMENT_SAMPLES - n))
        chunk_stems = _separate_segment(
            model, preset, Waveform(chunk), context, wiener_cfg
        )
        stems[:, start : start + n] = chunk_stems[:, :n]
    return [Waveform(s) for s in stems]


def _separate_segment(model, preset, segment, context, wiener_cfg) -> np.ndarray:
    spec = dsp.stft(segment)
    mag = spec.magnitude()
    net_mag = mag
    if preset.stft_freq_scale == "log":
        net_mag = dsp.warp_freq_axis(net_mag, "log")
    net_mag = dsp.scale_magnitude(net_mag, preset.stft_value_scale)
    with ad.no_grad():
        pred = model.forward(net_mag.values.astype(np.float32), context, training=False)
    mask_values = pred.data[0].astype(np.float64)
    est_mags = []
    for inst in range(N_INSTRUMENTS):
        values = mask_values[inst]
        if preset.stft_freq_scale == "log":
            warped = MagSpec(
                values, sample_rate=mag.sample_rate, n_fft=mag.n_fft, freq_axis="log"
            )
            values = np.clip(dsp.warp_freq_axis(warped, "linear").values, 0.0, 1.0)
        masked = apply_mask(Mask(values, kind="ratio", instrument=inst), spec)
        est_mags.append(np.abs(masked.bins))
    refined = wiener_filter(est_mags, spec, wiener_cfg)
    out = np.zeros((N_INSTRUMENTS, len(segment)))
    for inst, source_spec in enumerate(refined):
        out[inst] = dsp.istft(source_spec, len(segment)).samples
    return out


def oracle_stems(
    mixture: Waveform,
    sources: np.ndarray,
    labels: np.ndarray,
    mask_kind: str = "irm",
) -> list:
    """Reconstruct stems from ground-truth masks (the separation upper bound)."""
    from . import masks as mask_ops

    if mask_kind not in ("irm", "ibm"):
        raise InvalidInput(f"unknown oracle mask kind {mask_kind!r}")
    total = len(mixture)
    stems = np.zeros((N_INSTRUMENTS, total))
    for start in range(0, total, SEGMENT_SAMPLES):
        stop = min(start + SEGMENT_SAMPLES, total)
        chunk = mixture.samples[start:stop]
        n = len(chunk)
        if n < dsp.N_FFT:
            continue
        spec = dsp.stft(Waveform(chunk))
        mix_mag = spec.magnitude()
        for inst in range(N_INSTRUMENTS):
            if not labels[inst]:
                continue
            src_mag = dsp.stft(Waveform(sources[inst, start:stop])).magnitude()
            if mask_kind == "irm":
                m = mask_ops.ideal_ratio_mask(src_mag, mix_mag, inst)
            else:
                m = mask_ops.ideal_binary_mask(src_mag, mix_mag, inst)
            rec = dsp.istft(apply_mask(m, spec), n)
            stems[inst, start:stop] = rec.samples
    return [Waveform(s) for s in stems]
