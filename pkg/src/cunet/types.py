"""Core domain types: waveforms, spectrograms, masks, and context vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, ShapeError

SAMPLE_RATE = 11025
N_FFT = 1022
HOP = 256
N_FREQ = N_FFT // 2 + 1  # 512
N_FRAMES = 256
SEGMENT_SAMPLES = 65535  # ~6 s at 11025 Hz; yields exactly N_FREQ x N_FRAMES bins

INSTRUMENTS = (
    "violin",
    "viola",
    "cello",
    "double_bass",
    "flute",
    "oboe",
    "clarinet",
    "bassoon",
    "saxophone",
    "trumpet",
    "horn",
    "trombone",
    "tuba",
)
N_INSTRUMENTS = len(INSTRUMENTS)  # 13

VISUAL_FEATURE_DIM = 2048
CONTEXT_DIM = 1024


@dataclass
class Waveform:
    """Mono time-domain signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInput(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise InvalidInput(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInput("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)


@dataclass
class ComplexSpec:
    """Complex STFT matrix (freq x time) plus the analysis parameters."""

    bins: np.ndarray
    sample_rate: int = SAMPLE_RATE
    n_fft: int = N_FFT
    hop: int = HOP

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 2:
            raise ShapeError(f"spectrogram must be 2-D, got shape {self.bins.shape}")
        expected = self.n_fft // 2 + 1
        if self.bins.shape[0] != expected:
            raise ShapeError(
                f"expected {expected} frequency rows for n_fft={self.n_fft}, "
                f"got {self.bins.shape[0]}"
            )
        if not np.all(np.isfinite(self.bins)):
            raise InvalidInput("spectrogram contains non-finite values")

    @property
    def shape(self):
        return self.bins.shape

    def magnitude(self) -> "MagSpec":
        return MagSpec(np.abs(self.bins), sample_rate=self.sample_rate, n_fft=self.n_fft)


@dataclass
class MagSpec:
    """Magnitude spectrogram tagged with its frequency-axis and value scaling."""

    values: np.ndarray
    sample_rate: int = SAMPLE_RATE
    n_fft: int = N_FFT
    freq_axis: str = "linear"  # linear | log
    value_scale: str = "linear"  # linear | log | db_norm

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"magnitudes must be 2-D, got shape {self.values.shape}")
        if self.freq_axis not in ("linear", "log"):
            raise InvalidInput(f"unknown freq_axis {self.freq_axis!r}")
        if self.value_scale not in ("linear", "log", "db_norm"):
            raise InvalidInput(f"unknown value_scale {self.value_scale!r}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInput("magnitudes contain non-finite values")
        if self.value_scale == "linear" and np.any(self.values < 0):
            raise InvalidInput("linear-scale magnitudes must be non-negative")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class Mask:
    """Per-instrument time-frequency mask, ratio-valued or binary."""

    values: np.ndarray
    kind: str = "ratio"  # ratio | binary
    instrument: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {self.values.shape}")
        if self.kind not in ("ratio", "binary"):
            raise InvalidInput(f"unknown mask kind {self.kind!r}")
        if not 0 <= self.instrument < N_INSTRUMENTS:
            raise InvalidInput(f"instrument index {self.instrument} out of range")
        if self.kind == "ratio":
            if np.any(self.values < 0) or np.any(self.values > 1):
                raise InvalidInput("ratio mask values must lie in [0, 1]")
        else:
            if not np.all((self.values == 0) | (self.values == 1)):
                raise InvalidInput("binary mask values must be 0 or 1")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class ContextVector:
    """Conditioning payload: instrument labels, pooled visual, or motion features."""

    kind: str  # label | visual | motion
    payload: np.ndarray = field(default_factory=lambda: np.zeros(N_INSTRUMENTS))

    def __post_init__(self):
        self.payload = np.asarray(self.payload, dtype=np.float64)
        if self.kind not in ("label", "visual", "motion"):
            raise InvalidInput(f"unknown context kind {self.kind!r}")
        if not np.all(np.isfinite(self.payload)):
            raise InvalidInput("context payload contains non-finite values")
        if self.kind == "label":
            if self.payload.shape != (N_INSTRUMENTS,):
                raise ShapeError(
                    f"label context must have shape ({N_INSTRUMENTS},), got {self.payload.shape}"
                )
            if not np.all((self.payload == 0) | (self.payload == 1)):
                raise InvalidInput("label context must be binary")
        else:
            if self.payload.shape != (CONTEXT_DIM,):
                raise ShapeError(
                    f"{self.kind} context must have shape ({CONTEXT_DIM},), "
                    f"got {self.payload.shape}"
                )

    @property
    def dim(self) -> int:
        return self.payload.shape[0]


def label_vector(present: "list[str] | list[int] | np.ndarray") -> np.ndarray:
    """Binary indicator over the canonical instrument order.

    Accepts instrument names, integer indices, or an existing 13-vector.
    """
    arr = np.asarray(present)
    if arr.dtype.kind in "fiub" and arr.shape == (N_INSTRUMENTS,):
        return (arr != 0).astype(np.float64)
    out = np.zeros(N_INSTRUMENTS)
    for item in present:
        if isinstance(item, str):
            if item not in INSTRUMENTS:
                raise InvalidInput(f"unknown instrument {item!r}")
            out[INSTRUMENTS.index(item)] = 1.0
        else:
            idx = int(item)
            if not 0 <= idx < N_INSTRUMENTS:
                raise InvalidInput(f"instrument index {idx} out of range")
            out[idx] = 1.0
    return out
