"""Mix-and-separate sample generation and the training schedules.

Mixtures are synthesized on the fly: pick instruments, pick a random segment
from one recording of each, peak-scale every segment to [-1, 1], sum, and
divide by the number of sources. Ground-truth stems therefore exist by
construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dsp
from .errors import InvalidInput
from .types import INSTRUMENTS, N_INSTRUMENTS, SAMPLE_RATE, SEGMENT_SAMPLES, Waveform

MAX_SOURCES = 7
CURRICULUM_PATIENCE = 10_000
LR_PATIENCE = 25_000

_SILENT_PEAK = 1e-8
_SILENT_RETRIES = 5


@dataclass
class SourceLibrary:
    """Per-instrument lists of waveforms, all at the canonical 11025 Hz.

    ``feature_paths`` optionally carries a per-recording feature-file path
    (same list structure as ``recordings``) for visually conditioned training.
    """

    recordings: dict = field(default_factory=dict)  # instrument name -> list[Waveform]
    feature_paths: dict = field(default_factory=dict)  # instrument name -> list[str | None]

    def __post_init__(self):
        for name, waves in self.recordings.items():
            if name not in INSTRUMENTS:
                raise InvalidInput(f"unknown instrument {name!r}")
            for w in waves:
                if w.sample_rate != SAMPLE_RATE:
                    raise InvalidInput(
                        f"{name} recording at {w.sample_rate} Hz; expected {SAMPLE_RATE}"
                    )

    @classmethod
    def from_manifest(cls, path) -> "SourceLibrary":
        """Load a JSON manifest mapping instrument name -> list of WAV paths.

        Entries may also be objects with a "path" key (and optionally a
        "features" key pointing at a feature file; kept for callers that
        need it). Audio is resampled to 11025 Hz on load.
        """
        from .wavio import read_wav

        path = Path(path)
        with open(path) as handle:
            manifest = json.load(handle)
        recordings = {}
        feature_paths = {}
        base = path.parent
        for name, entries in manifest.items():
            waves = []
            feats = []
            for entry in entries:
                wav_path = entry["path"] if isinstance(entry, dict) else entry
                wav_path = Path(wav_path)
                if not wav_path.is_absolute():
                    wav_path = base / wav_path
                wave = read_wav(wav_path)
                if wave.sample_rate != SAMPLE_RATE:
                    wave = dsp.resample(wave, SAMPLE_RATE)
                waves.append(wave)
                feat = entry.get("features") if isinstance(entry, dict) else None
                if feat is not None and not Path(feat).is_absolute():
                    feat = str(base / feat)
                feats.append(feat)
            recordings[name] = waves
            feature_paths[name] = feats
        return cls(recordings, feature_paths)

    def available_instruments(self) -> list:
        return [name for name in INSTRUMENTS if self.recordings.get(name)]


@dataclass
class MixtureSample:
    """A synthetic mixture, its per-instrument stems, and the presence labels."""

    mixture: Waveform
    sources: np.ndarray  # (N_INSTRUMENTS, n_samples); silent rows where absent
    labels: np.ndarray  # binary (N_INSTRUMENTS,)
    provenance: list = field(default_factory=list)  # (instrument idx, recording idx)

    @property
    def n_sources(self) -> int:
        return int(self.labels.sum())


def _peak_scale(segment: np.ndarray) -> np.ndarray:
    return segment / max(float(np.abs(segment).max()), _SILENT_PEAK)


def sample_mixture(
    lib: SourceLibrary,
    n_sources: int,
    seed: int,
    n_samples: int = SEGMENT_SAMPLES,
) -> MixtureSample:
    """Draw a deterministic mixture of ``n_sources`` distinct instruments."""
    if not 1 <= n_sources <= MAX_SOURCES:
        raise InvalidInput(f"n_sources must be in 1..{MAX_SOURCES}, got {n_sources}")
    available = lib.available_instruments()
    if len(available) < n_sources:
        raise InvalidInput(
            f"library has {len(available)} instruments, need {n_sources}"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(available), size=n_sources, replace=False)
    sources = np.zeros((N_INSTRUMENTS, n_samples))
    labels = np.zeros(N_INSTRUMENTS)
    provenance = []
    for idx in sorted(chosen):
        name = available[idx]
        waves = lib.recordings[name]
        segment = None
        rec_idx = 0
        for _ in range(_SILENT_RETRIES):
            rec_idx = int(rng.integers(len(waves)))
            data = waves[rec_idx].samples
            if len(data) >= n_samples:
                start = int(rng.integers(len(data) - n_samples + 1))
                candidate = data[start : start + n_samples]
            else:
                candidate = np.pad(data, (0, n_samples - len(data)))
            segment = candidate
            if float(np.abs(candidate).max()) > _SILENT_PEAK:
                break
        inst = INSTRUMENTS.index(name)
        sources[inst] = _peak_scale(segment)
        labels[inst] = 1.0
        provenance.append((inst, rec_idx))
    mixture = sources.sum(axis=0) / n_sources
    return MixtureSample(Waveform(mixture), sources, labels, provenance)


@dataclass
class ScheduleState:
    """Curriculum and learning-rate schedule state.

    Each schedule keeps its own best-loss/stagnation pair: the curriculum
    resets at 10k stagnant iterations, which must not starve the 25k
    learning-rate window.
    """

    max_sources: int = 2
    lr: float = 1e-5
    curriculum_best: float = float("inf")
    curriculum_stagnation: int = 0
    lr_best: float = float("inf")
    lr_stagnation: int = 0

    def __post_init__(self):
        if not 1 <= self.max_sources <= MAX_SOURCES:
            raise InvalidInput(f"max_sources must be in 1..{MAX_SOURCES}")
        if self.lr <= 0:
            raise InvalidInput("lr must be positive")


def curriculum_step(state: ScheduleState, val_loss: float) -> ScheduleState:
    """Add one source after 10k iterations without validation improvement (cap 7)."""
    if val_loss < state.curriculum_best:
        return replace(state, curriculum_best=val_loss, curriculum_stagnation=0)
    count = state.curriculum_stagnation + 1
    if count >= CURRICULUM_PATIENCE:
        return replace(
            state,
            max_sources=min(state.max_sources + 1, MAX_SOURCES),
            curriculum_stagnation=0,
        )
    return replace(state, curriculum_stagnation=count)


def lr_step(state: ScheduleState, val_loss: float) -> ScheduleState:
    """Halve the learning rate after 25k iterations without improvement."""
    if val_loss < state.lr_best:
        return replace(state, lr_best=val_loss, lr_stagnation=0)
    count = state.lr_stagnation + 1
    if count >= LR_PATIENCE:
        return replace(state, lr=state.lr / 2.0, lr_stagnation=0)
    return replace(state, lr_stagnation=count)


def schedule_update(state: ScheduleState, val_loss: float) -> ScheduleState:
    """Apply both schedules to one validation reading."""
    return lr_step(curriculum_step(state, val_loss), val_loss)
