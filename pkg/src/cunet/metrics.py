"""Separation quality metrics: SDR/SIR/SAR, SI-SDR, SD-SDR, and PES.

SDR/SIR/SAR follow the classic least-squares decomposition of the estimate
onto spans of delayed reference signals; SI-SDR and SD-SDR compare against
the optimally scaled reference. All ratios share a small epsilon inside the
denominator and are clipped to [floor_db, cap_db].
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz
from scipy.signal import fftconvolve

from .errors import DegenerateReferences, InvalidInput, NoSilence, SilentTarget
from .types import HOP, INSTRUMENTS, Waveform
from .util import atomic_write_bytes


@dataclass
class MetricConfig:
    eps: float = 1e-9
    floor_db: float = -80.0
    cap_db: float = 80.0
    proj_filter_len: int = 512
    silence_threshold: float = 1e-8  # per-frame energy below this counts as silent


DEFAULT_CONFIG = MetricConfig()

SDR_FAMILY = ("SDR", "SIR", "SAR", "SI-SDR", "SD-SDR")


def _clip_db(value: float, cfg: MetricConfig) -> float:
    return float(min(max(value, cfg.floor_db), cfg.cap_db))


def _ratio_db(num: float, den: float, cfg: MetricConfig) -> float:
    if num <= 0.0:
        return cfg.floor_db
    return _clip_db(10.0 * math.log10(num / (den + cfg.eps)), cfg)


def _as_samples(wave) -> np.ndarray:
    if isinstance(wave, Waveform):
        return wave.samples
    return np.asarray(wave, dtype=np.float64)


def _check_pair(est: np.ndarray, ref: np.ndarray, cfg: MetricConfig):
    if est.shape != ref.shape:
        raise InvalidInput(f"length mismatch: est {est.shape} vs ref {ref.shape}")
    if float(ref @ ref) <= cfg.silence_threshold:
        raise SilentTarget("reference is silent; scaled-reference metrics are undefined")


def si_sdr(est, ref, cfg: MetricConfig = DEFAULT_CONFIG) -> float:
    """Scale-invariant SDR: error measured against alpha * ref, alpha = <e,r>/||r||^2."""
    est, ref = _as_samples(est), _as_samples(ref)
    _check_pair(est, ref, cfg)
    alpha = float(est @ ref) / float(ref @ ref)
    target = alpha * ref
    err = target - est
    return _ratio_db(float(target @ target), float(err @ err), cfg)


def sd_sdr(est, ref, cfg: MetricConfig = DEFAULT_CONFIG) -> float:
    """Scale-dependent SDR: same scaled target, but the error keeps the raw ref."""
    est, ref = _as_samples(est), _as_samples(ref)
    _check_pair(est, ref, cfg)
    alpha = float(est @ ref) / float(ref @ ref)
    target = alpha * ref
    err = ref - est
    return _ratio_db(float(target @ target), float(err @ err), cfg)


def silent_frames(ref, cfg: MetricConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Indices of hop-aligned frames whose reference energy is below threshold."""
    ref = _as_samples(ref)
    n_frames = len(ref) // HOP
    frames = ref[: n_frames * HOP].reshape(n_frames, HOP)
    energy = np.sum(frames * frames, axis=1)
    return np.flatnonzero(energy < cfg.silence_threshold)


def pes(est, frames: np.ndarray, cfg: MetricConfig = DEFAULT_CONFIG) -> float:
    """Predicted energy at silence: mean squared estimate over the given frames, in dB."""
    est = _as_samples(est)
    frames = np.asarray(frames, dtype=np.intp)
    if frames.size == 0:
        raise NoSilence("no silent frames to evaluate")
    idx = (frames[:, None] * HOP + np.arange(HOP)[None, :]).ravel()
    if idx.max() >= len(est):
        raise InvalidInput("silent frame index beyond the end of the estimate")
    seg = est[idx]
    mean_sq = float(seg @ seg) / seg.size
    return float(max(10.0 * math.log10(mean_sq + cfg.eps), cfg.floor_db))


def _delayed_gram(refs: np.ndarray, flen: int) -> np.ndarray:
    """Gram matrix of all L-tap delayed reference signals, via FFT correlation."""
    n_refs, n_samp = refs.shape
    n_fft = 1 << int(np.ceil(np.log2(n_samp + flen - 1)))
    sf = np.fft.rfft(refs, n=n_fft, axis=1)
    gram = np.zeros((n_refs * flen, n_refs * flen))
    for i in range(n_refs):
        for j in range(i, n_refs):
            ssf = np.fft.irfft(sf[i] * np.conj(sf[j]), n=n_fft)
            block = toeplitz(np.hstack((ssf[0], ssf[-1 : -flen : -1])), r=ssf[:flen])
            gram[i * flen : (i + 1) * flen, j * flen : (j + 1) * flen] = block
            gram[j * flen : (j + 1) * flen, i * flen : (i + 1) * flen] = block.T
    return gram


def _project_delayed(est: np.ndarray, refs: np.ndarray, flen: int) -> np.ndarray:
    """Least-squares projection of est onto the span of delayed refs.

    Returns the projection with length n_samp + flen - 1. Raises
    DegenerateReferences when the delayed references are linearly dependent.
    """
    n_refs, n_samp = refs.shape
    n_fft = 1 << int(np.ceil(np.log2(n_samp + flen - 1)))
    sf = np.fft.rfft(refs, n=n_fft, axis=1)
    sef = np.fft.rfft(est, n=n_fft)
    d = np.zeros(n_refs * flen)
    for i in range(n_refs):
        ssef = np.fft.irfft(sf[i] * np.conj(sef), n=n_fft)
        d[i * flen : (i + 1) * flen] = np.hstack((ssef[0], ssef[-1 : -flen : -1]))
    gram = _delayed_gram(refs, flen)
    try:
        low = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise DegenerateReferences("delayed references are linearly dependent") from exc
    coef = np.linalg.solve(low.T, np.linalg.solve(low, d)).reshape(n_refs, flen)
    proj = np.zeros(n_samp + flen - 1)
    for i in range(n_refs):
        proj += fftconvolve(coef[i], refs[i])[: n_samp + flen - 1]
    return proj


def bss_eval(est, refs, target_idx: int, cfg: MetricConfig = DEFAULT_CONFIG):
    """(SDR, SIR, SAR) from the delayed-reference least-squares decomposition.

    s_target is the projection onto the target's own delayed span, e_interf
    the remaining projection onto all references, e_artif the residual.
    """
    est = _as_samples(est)
    refs = np.stack([_as_samples(r) for r in refs])
    if est.shape[0] != refs.shape[1]:
        raise InvalidInput("estimate and references must have equal lengths")
    if not 0 <= target_idx < refs.shape[0]:
        raise InvalidInput(f"target index {target_idx} out of range")
    if float(refs[target_idx] @ refs[target_idx]) <= cfg.silence_threshold:
        raise SilentTarget("target reference is silent")
    flen = cfg.proj_filter_len
    est_pad = np.concatenate([est, np.zeros(flen - 1)])
    s_target = _project_delayed(est, refs[target_idx : target_idx + 1], flen)
    proj_all = _project_delayed(est, refs, flen)
    e_interf = proj_all - s_target
    e_artif = est_pad - proj_all
    e_total = e_interf + e_artif
    sdr = _ratio_db(float(s_target @ s_target), float(e_total @ e_total), cfg)
    sir = _ratio_db(float(s_target @ s_target), float(e_interf @ e_interf), cfg)
    kept = s_target + e_interf
    sar = _ratio_db(float(kept @ kept), float(e_artif @ e_artif), cfg)
    return sdr, sir, sar


@dataclass
class EvalRow:
    piece: str
    instrument: str
    n_sources: int
    metrics: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def extend(self, other: "EvalReport"):
        self.rows.extend(other.rows)

    def values(self, metric: str) -> np.ndarray:
        return np.array([r.metrics[metric] for r in self.rows if metric in r.metrics])

    def aggregate(self) -> dict:
        """Mean and std per metric, overall and grouped by instrument / #sources."""

        def summarize(rows):
            out = {}
            names = sorted({m for r in rows for m in r.metrics})
            for name in names:
                vals = [r.metrics[name] for r in rows if name in r.metrics]
                out[name] = {
                    "mean": float(np.mean(vals)),
                    "std": float(np.std(vals)),
                    "count": len(vals),
                }
            return out

        by_instrument = {}
        for name in sorted({r.instrument for r in self.rows}):
            by_instrument[name] = summarize([r for r in self.rows if r.instrument == name])
        by_n_sources = {}
        for n in sorted({r.n_sources for r in self.rows}):
            by_n_sources[str(n)] = summarize([r for r in self.rows if r.n_sources == n])
        return {
            "overall": summarize(self.rows),
            "per_instrument": by_instrument,
            "per_n_sources": by_n_sources,
        }

    def to_csv(self, path):
        import io

        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["piece", "instrument", "n_sources", "metric", "value"])
        for row in self.rows:
            for metric, value in row.metrics.items():
                writer.writerow([row.piece, row.instrument, row.n_sources, metric, value])
        atomic_write_bytes(path, buf.getvalue().encode())

    def to_json(self, path):
        payload = json.dumps(self.aggregate(), indent=2).encode()
        atomic_write_bytes(path, payload)


def evaluate_piece(
    est_sources,
    ref_sources,
    labels,
    cfg: MetricConfig = DEFAULT_CONFIG,
    piece: str = "piece",
) -> EvalReport:
    """Score one piece: SDR-family metrics for present sources, PES for absent ones."""
    if len(est_sources) != len(ref_sources):
        raise InvalidInput("estimate and reference counts differ")
    labels = np.asarray(labels)
    if labels.shape[0] != len(ref_sources):
        raise InvalidInput("labels length must match the source count")
    present = [i for i in range(len(labels)) if labels[i]]
    n_sources = len(present)
    refs_present = [_as_samples(ref_sources[i]) for i in present]
    report = EvalReport()
    for i in range(len(labels)):
        name = INSTRUMENTS[i] if i < len(INSTRUMENTS) else str(i)
        est = _as_samples(est_sources[i])
        if labels[i]:
            row = EvalRow(piece, name, n_sources)
            row.metrics["SI-SDR"] = si_sdr(est, ref_sources[i], cfg)
            row.metrics["SD-SDR"] = sd_sdr(est, ref_sources[i], cfg)
            sdr, sir, sar = bss_eval(est, refs_present, present.index(i), cfg)
            row.metrics["SDR"] = sdr
            row.metrics["SIR"] = sir
            row.metrics["SAR"] = sar
        else:
            frames = silent_frames(ref_sources[i], cfg)
            row = EvalRow(piece, name, n_sources)
            row.metrics["PES"] = pes(est, frames, cfg)
        report.rows.append(row)
    return report
