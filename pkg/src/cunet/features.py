"""Visual-feature container: magic "CUF1", little-endian binary.

Layout: magic, version u32, n_sources u32, n_frames u32, dim u32, then
float32 data ordered source-major, frame-major. Carries per-source frame
features (e.g. 2048-dim backbone embeddings) for visual and motion
conditioning; the features themselves are always computed elsewhere.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .types import VISUAL_FEATURE_DIM
from .util import atomic_write_bytes

MAGIC = b"CUF1"
VERSION = 1


def write_features(path, features: np.ndarray):
    """Store a (n_sources, n_frames, dim) float array."""
    arr = np.ascontiguousarray(features, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise FormatError(f"features must be (sources, frames, dim), got {arr.shape}")
    header = struct.pack("<4sIIII", MAGIC, VERSION, *arr.shape)
    atomic_write_bytes(path, header + arr.tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < 20:
        raise FormatError(f"{path}: truncated feature file")
    magic, version, n_sources, n_frames, dim = struct.unpack_from("<4sIIII", blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = 20 + n_sources * n_frames * dim * 4
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload is {len(blob) - 20} bytes, expected {expected - 20}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=20)
    return data.reshape(n_sources, n_frames, dim).astype(np.float64)


def validate_dim(features: np.ndarray):
    if features.shape[-1] != VISUAL_FEATURE_DIM:
        raise FormatError(
            f"expected {VISUAL_FEATURE_DIM}-dim features, got {features.shape[-1]}"
        )
