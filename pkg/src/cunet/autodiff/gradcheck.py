"""Central-finite-difference gradient verification."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward, tsum


def numeric_gradient(fn, params, index: int, h: float = 1e-3) -> np.ndarray:
    """Central differences of scalar ``fn(*params)`` w.r.t. ``params[index]``."""
    p = params[index]
    grad = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(fn(*params).data)
        flat[i] = orig - h
        lo = float(fn(*params).data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


def check_gradients(fn, params, h: float = 1e-3, rtol: float = 1e-5) -> float:
    """Compare analytic and numeric gradients of scalar ``fn(*params)``.

    Returns the worst relative error over all parameters; raises AssertionError
    beyond ``rtol``. The relative error is normalized by the larger of the two
    gradient magnitudes, with an absolute guard for near-zero entries.
    """
    for p in params:
        p.grad = None
    out = fn(*params)
    backward(out)
    worst = 0.0
    for i, p in enumerate(params):
        if not p.requires_grad:
            continue
        num = numeric_gradient(fn, params, i, h)
        ana = p.grad if p.grad is not None else np.zeros_like(p.data)
        scale = np.maximum(np.maximum(np.abs(num), np.abs(ana)), 1e-4)
        err = float((np.abs(ana - num) / scale).max())
        worst = max(worst, err)
        assert err < rtol, f"gradient mismatch on parameter {i}: rel. error {err:.3e}"
    return worst


def scalarize(fn):
    """Wrap a tensor-valued function so its output is summed to a scalar."""

    def wrapped(*params):
        return tsum(fn(*params))

    return wrapped
