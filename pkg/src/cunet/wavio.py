"""RIFF/WAVE reading and writing.

Reads 16-bit PCM and 32-bit IEEE float, downmixing multi-channel input by the
channel mean. Writes mono 16-bit PCM atomically.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, UnsupportedFormat
from .types import Waveform
from .util import atomic_write_bytes

_PCM = 1
_IEEE_FLOAT = 3


def read_wav(path) -> Waveform:
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid, size = struct.unpack_from("<4sI", blob, pos)
        pos += 8
        if pos + size > len(blob):
            raise FormatError(f"{path}: truncated {cid.decode(errors='replace')} chunk")
        if cid == b"fmt ":
            if size < 16:
                raise FormatError(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", blob, pos)
        elif cid == b"data":
            data = blob[pos : pos + size]
        pos += size + (size & 1)
    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if n_channels < 1:
        raise FormatError(f"{path}: zero channels")
    if audio_format == _PCM and bits == 16:
        raw = np.frombuffer(data, dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == _IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormat(
            f"{path}: unsupported codec (format {audio_format}, {bits}-bit)"
        )
    frames = len(samples) // n_channels
    samples = samples[: frames * n_channels]
    if n_channels > 1:
        samples = samples.reshape(frames, n_channels).mean(axis=1)
    return Waveform(samples, sample_rate=int(sample_rate))


def write_wav(path, wave: Waveform):
    """Write mono 16-bit PCM at the waveform's sample rate."""
    q = np.clip(np.rint(wave.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        _PCM,
        1,
        wave.sample_rate,
        wave.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    atomic_write_bytes(path, header + payload)
