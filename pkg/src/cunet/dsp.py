"""Signal-processing kernels: resampling, STFT/iSTFT, axis warping, magnitude scaling.

All functions are pure; none mutate their inputs.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import firwin, kaiser_beta, resample_poly

from .errors import InvalidInput
from .types import HOP, N_FFT, SAMPLE_RATE, ComplexSpec, MagSpec, Waveform

# Synthesis divides by the squared-window overlap sum; bins where that sum is
# below this floor (possible only at the very edges) are left untouched.
_OLA_FLOOR = 1e-8

# Stop-band attenuation target for the resampling filter, dB.
_RESAMPLE_ATTEN_DB = 67.0
_TAPS_PER_PHASE = 64


def _hann(n: int) -> np.ndarray:
    # Periodic Hann, matching FFT analysis conventions.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def resample(wave: Waveform, target_rate: int) -> Waveform:
    """Polyphase windowed-sinc resampling to ``target_rate``.

    The anti-aliasing filter uses 64 taps per polyphase branch with a Kaiser
    window, giving > 60 dB stop-band rejection above the output Nyquist.
    """
    if len(wave) == 0:
        raise InvalidInput("cannot resample an empty waveform")
    if target_rate <= 0:
        raise InvalidInput(f"target_rate must be positive, got {target_rate}")
    if target_rate == wave.sample_rate:
        return Waveform(wave.samples.copy(), sample_rate=target_rate)

    g = math.gcd(int(target_rate), int(wave.sample_rate))
    up, down = target_rate // g, wave.sample_rate // g
    beta = kaiser_beta(_RESAMPLE_ATTEN_DB)
    numtaps = _TAPS_PER_PHASE * max(up, down) + 1
    # Transition band sits just below the narrower Nyquist so the stop band
    # starts at the band edge itself.
    width = (_RESAMPLE_ATTEN_DB - 7.95) / (2.285 * (numtaps - 1)) / np.pi
    cutoff = min(1.0 / up, 1.0 / down)
    h = firwin(numtaps, max(cutoff - width / 2.0, cutoff * 0.5), window=("kaiser", beta))
    out = resample_poly(wave.samples, up, down, window=h)
    return Waveform(out, sample_rate=target_rate)


def stft(wave: Waveform) -> ComplexSpec:
    """Centered STFT with a periodic Hann window of length ``N_FFT`` and hop ``HOP``.

    Reflect padding by ``N_FFT // 2`` on both sides makes a 65535-sample input
    produce exactly 512 x 256 bins.
    """
    x = wave.samples
    if len(x) < N_FFT:
        raise InvalidInput(f"input of {len(x)} samples is shorter than the {N_FFT} window")
    pad = N_FFT // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = 1 + (len(xp) - N_FFT) // HOP
    strides = (xp.strides[0] * HOP, xp.strides[0])
    frames = np.lib.stride_tricks.as_strided(xp, shape=(n_frames, N_FFT), strides=strides)
    bins = np.fft.rfft(frames * _hann(N_FFT), axis=1).T
    return ComplexSpec(bins, sample_rate=wave.sample_rate)


def istft(spec: ComplexSpec, length: int) -> Waveform:
    """Overlap-add synthesis with squared-window normalization.

    Inverse of :func:`stft` on interior samples; ``length`` selects how many
    samples of the centered signal to return.
    """
    if length <= 0:
        raise InvalidInput(f"target length must be positive, got {length}")
    win = _hann(spec.n_fft)
    frames = np.fft.irfft(spec.bins.T, n=spec.n_fft, axis=1) * win
    n_frames = frames.shape[0]
    total = spec.n_fft + (n_frames - 1) * spec.hop
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = win * win
    for t in range(n_frames):
        start = t * spec.hop
        out[start : start + spec.n_fft] += frames[t]
        norm[start : start + spec.n_fft] += wsq
    out /= np.maximum(norm, _OLA_FLOOR)
    pad = spec.n_fft // 2
    out = out[pad : pad + length]
    if len(out) < length:
        out = np.pad(out, (0, length - len(out)))
    return Waveform(out, sample_rate=spec.sample_rate)


def spectral_energy(spec: ComplexSpec) -> float:
    """Parseval-weighted energy: equals sum_t ||window * frame_t||^2 exactly."""
    w = np.full(spec.shape[0], 2.0)
    w[0] = 1.0
    if spec.n_fft % 2 == 0:
        w[-1] = 1.0
    return float(np.sum(w[:, None] * np.abs(spec.bins) ** 2) / spec.n_fft)


def ola_gain() -> float:
    """Energy ratio sum|STFT|^2 / sum x^2 for interior-supported signals."""
    win = _hann(N_FFT)
    return float(np.sum(win * win) / HOP)


def _bin_freqs(sample_rate: int, n_rows: int, n_fft: int) -> np.ndarray:
    return np.arange(n_rows) * (sample_rate / n_fft)


def _log_freqs(sample_rate: int, n_rows: int, n_fft: int) -> np.ndarray:
    # Row 0 stays at DC; rows 1..n-1 run geometrically from bin 1 to Nyquist.
    f1 = sample_rate / n_fft
    fmax = (n_rows - 1) * sample_rate / n_fft
    out = np.empty(n_rows)
    out[0] = 0.0
    out[1:] = f1 * (fmax / f1) ** (np.arange(n_rows - 1) / (n_rows - 2))
    return out


def _interp_rows(values: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Piecewise-linear resampling of the row axis from grid ``src`` to ``dst``."""
    idx = np.searchsorted(src, dst, side="right") - 1
    idx = np.clip(idx, 0, len(src) - 2)
    span = src[idx + 1] - src[idx]
    t = np.clip((dst - src[idx]) / span, 0.0, 1.0)
    return values[idx] * (1.0 - t)[:, None] + values[idx + 1] * t[:, None]


def warp_freq_axis(m: MagSpec, target: str) -> MagSpec:
    """Resample the frequency axis between the linear and log grids.

    Monotone piecewise-linear interpolation over the 512 rows; the DC row is
    copied unchanged in both directions.
    """
    if target not in ("linear", "log"):
        raise InvalidInput(f"unknown target axis {target!r}")
    if m.freq_axis == target:
        raise InvalidInput(f"freq_axis is already {target!r}")
    n_rows = m.shape[0]
    lin = _bin_freqs(m.sample_rate, n_rows, m.n_fft)
    log = _log_freqs(m.sample_rate, n_rows, m.n_fft)
    src, dst = (lin, log) if target == "log" else (log, lin)
    out = _interp_rows(m.values, src, dst)
    out[0] = m.values[0]
    return MagSpec(
        out,
        sample_rate=m.sample_rate,
        n_fft=m.n_fft,
        freq_axis=target,
        value_scale=m.value_scale,
    )


def scale_magnitude(m: MagSpec, mode: str) -> MagSpec:
    """Compress linear magnitudes to ``log`` or normalized-dB (``db_norm``) scale.

    log:     v -> ln(1 + v)
    db_norm: dB relative to the segment's peak magnitude, clipped to an 80 dB
             range and mapped affinely to [0, 1] (floor -> 0, peak -> 1).
    """
    if m.value_scale != "linear":
        raise InvalidInput(f"input is already {m.value_scale}-scaled")
    if mode == "log":
        out = np.log1p(m.values)
    elif mode == "db_norm":
        peak = float(m.values.max(initial=0.0))
        if peak <= 0.0:
            out = np.zeros_like(m.values)
        else:
            db = 20.0 * np.log10(m.values + 1e-7)
            ceiling = 20.0 * np.log10(peak + 1e-7)
            out = (np.clip(db - ceiling, -80.0, 0.0) + 80.0) / 80.0
    else:
        raise InvalidInput(f"unknown value scale {mode!r}")
    return MagSpec(
        out,
        sample_rate=m.sample_rate,
        n_fft=m.n_fft,
        freq_axis=m.freq_axis,
        value_scale=mode,
    )
