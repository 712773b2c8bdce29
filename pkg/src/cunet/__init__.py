"""Conditioned U-Net source separation for multi-instrument music.

Spectrogram-masking separation with label or visual conditioning, a
mix-and-separate training pipeline, Wiener post-filtering, and a BSS
evaluation suite.
"""

from . import autodiff, dsp, losses, masks, metrics, mixgen, model, presets, wiener
from .errors import (
    CunetError,
    DegenerateReferences,
    FormatError,
    InvalidInput,
    NoSilence,
    ShapeError,
    SilentTarget,
    UnsupportedFormat,
)
from .types import (
    CONTEXT_DIM,
    HOP,
    INSTRUMENTS,
    N_FFT,
    N_FRAMES,
    N_FREQ,
    N_INSTRUMENTS,
    SAMPLE_RATE,
    SEGMENT_SAMPLES,
    VISUAL_FEATURE_DIM,
    ComplexSpec,
    ContextVector,
    MagSpec,
    Mask,
    Waveform,
    label_vector,
)

__version__ = "0.1.0"
