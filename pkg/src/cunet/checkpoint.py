"""Model checkpoints: magic "CUNW", little-endian binary.

Layout: magic, version u32, config-JSON block (u32 length + UTF-8), tensor
count u32, then per tensor: name length u32, UTF-8 name, ndim u32, dims
u32 each, float32 data. Stores parameters, batch-norm running statistics,
and Adam moments, so training resumes exactly where it stopped.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError
from .model import Model, UNetConfig
from .util import atomic_write_bytes

MAGIC = b"CUNW"
VERSION = 1


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    encoded = name.encode()
    parts = [struct.pack("<I", len(encoded)), encoded, struct.pack("<I", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(arr.tobytes())
    return b"".join(parts)


def save_checkpoint(path, model: Model, optimizer=None, extra: dict | None = None):
    meta = {"model": model.config.to_dict(), "extra": extra or {}}
    tensors: list[tuple[str, np.ndarray]] = []
    for name, param in model.params.items():
        tensors.append((name, param.data))
    for name, stats in model.buffers.items():
        tensors.append((f"{name}.running_mean", stats.mean))
        tensors.append((f"{name}.running_var", stats.var))
    if optimizer is not None:
        meta["adam_t"] = optimizer.t
        for (name, _), m, v in zip(model.params.items(), optimizer.m, optimizer.v):
            tensors.append((f"adam.m.{name}", m))
            tensors.append((f"adam.v.{name}", v))
    config_blob = json.dumps(meta).encode()
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<I", len(config_blob)),
        config_blob,
        struct.pack("<I", len(tensors)),
    ]
    parts.extend(_pack_tensor(name, arr) for name, arr in tensors)
    atomic_write_bytes(path, b"".join(parts))


def _read_exact(blob: bytes, pos: int, size: int, path) -> tuple[bytes, int]:
    if pos + size > len(blob):
        raise FormatError(f"{path}: truncated checkpoint")
    return blob[pos : pos + size], pos + size


def load_checkpoint(path):
    """Rebuild the model (and optimizer state, if present) from a checkpoint.

    Returns (model, meta) where meta carries "extra" plus, when saved with an
    optimizer, "adam_t"/"adam_m"/"adam_v" keyed like the parameters.
    """
    with open(path, "rb") as handle:
        blob = handle.read()
    raw, pos = _read_exact(blob, 0, 8, path)
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version = struct.unpack("<I", raw[4:])[0]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    raw, pos = _read_exact(blob, pos, 4, path)
    config_len = struct.unpack("<I", raw)[0]
    raw, pos = _read_exact(blob, pos, config_len, path)
    try:
        meta = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt config block") from exc
    raw, pos = _read_exact(blob, pos, 4, path)
    n_tensors = struct.unpack("<I", raw)[0]
    tensors = {}
    for _ in range(n_tensors):
        raw, pos = _read_exact(blob, pos, 4, path)
        name_len = struct.unpack("<I", raw)[0]
        raw, pos = _read_exact(blob, pos, name_len, path)
        name = raw.decode()
        raw, pos = _read_exact(blob, pos, 4, path)
        ndim = struct.unpack("<I", raw)[0]
        raw, pos = _read_exact(blob, pos, 4 * ndim, path)
        shape = struct.unpack(f"<{ndim}I", raw)
        count = int(np.prod(shape)) if ndim else 1
        raw, pos = _read_exact(blob, pos, 4 * count, path)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    model = Model(UNetConfig.from_dict(meta["model"]))
    for name, param in model.params.items():
        if name not in tensors:
            raise FormatError(f"{path}: missing parameter {name}")
        if tensors[name].shape != param.data.shape:
            raise FormatError(f"{path}: shape mismatch for {name}")
        param.data = tensors[name]
    for name, stats in model.buffers.items():
        stats.mean[...] = tensors[f"{name}.running_mean"]
        stats.var[...] = tensors[f"{name}.running_var"]
    out_meta = {"extra": meta.get("extra", {})}
    if "adam_t" in meta:
        out_meta["adam_t"] = meta["adam_t"]
        out_meta["adam_m"] = [tensors[f"adam.m.{n}"] for n in model.params]
        out_meta["adam_v"] = [tensors[f"adam.v.{n}"] for n in model.params]
    return model, out_meta
