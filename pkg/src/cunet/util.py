"""Small shared helpers."""

from __future__ import annotations

import os
import tempfile


def atomic_write_bytes(path, payload: bytes):
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def global_seed(default: int = 0) -> int:
    """Seed from the CUNET_SEED environment variable, or ``default``."""
    value = os.environ.get("CUNET_SEED")
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        return default
