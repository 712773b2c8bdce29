"""Reverse-mode autodiff over dense numpy arrays.

The graph is built eagerly: every op returns a Tensor holding references to
its parents and a closure that maps the output gradient to parent gradients.
``backward`` walks the graph once in reverse topological order, accumulating
additively into ``grad`` (so reuse of a tensor sums its contributions).

Tensors are float32 by default; passing float64 data keeps float64, which the
gradient-check harness relies on. Ops never upcast.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import InvalidInput, ShapeError

_grad_enabled = True

# When true, every op asserts its output is finite (slow; for debugging).
DEBUG_NAN_CHECKS = False


@contextmanager
def no_grad():
    """Disable graph construction (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float64:
        return arr
    return arr.astype(np.float32, copy=False)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _make(data, parents, backward_fn) -> Tensor:
    """Wrap an op result, attaching graph edges when gradients are live."""
    if DEBUG_NAN_CHECKS and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by an op")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(tensor: Tensor, grad: np.ndarray):
    if grad.shape != tensor.data.shape:
        raise ShapeError(
            f"gradient shape {grad.shape} does not match tensor shape {tensor.data.shape}"
        )
    if tensor.grad is None:
        tensor.grad = grad.astype(tensor.data.dtype, copy=True)
    else:
        tensor.grad += grad


def backward(loss: Tensor):
    """Populate ``grad`` for every tensor the scalar ``loss`` depends on."""
    if loss.data.size != 1:
        raise InvalidInput(f"backward requires a scalar loss, got shape {loss.data.shape}")
    # Iterative topological sort; recursion would overflow on deep graphs.
    order = []
    seen = {id(loss)}
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                seen.add(id(parent))
                stack.append((parent, False))
    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, grad in zip(node._parents, grads):
            if grad is not None and parent.requires_grad:
                _accumulate(parent, grad)


def _coerce(other, like: Tensor) -> Tensor:
    if isinstance(other, Tensor):
        return other
    return Tensor(np.asarray(other, dtype=like.dtype))


def _check_same_shape(a: Tensor, b: Tensor):
    if a.data.shape != b.data.shape and b.data.ndim != 0:
        raise ShapeError(f"operand shapes differ: {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    _check_same_shape(a, b)

    def back(g):
        gb = g if b.data.ndim else np.array(g.sum(), dtype=b.dtype)
        return g, gb

    return _make(a.data + b.data, (a, b), back)


def sub(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    _check_same_shape(a, b)

    def back(g):
        gb = -g if b.data.ndim else np.array(-g.sum(), dtype=b.dtype)
        return g, gb

    return _make(a.data - b.data, (a, b), back)


def rsub(scalar, a: Tensor) -> Tensor:
    """scalar - a, with scalar constant."""
    c = a.dtype.type(scalar)
    return _make(c - a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    _check_same_shape(a, b)

    def back(g):
        ga = g * b.data
        gb = g * a.data
        if not b.data.ndim:
            gb = np.array(gb.sum(), dtype=b.dtype)
        return ga, gb

    return _make(a.data * b.data, (a, b), back)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def log(a: Tensor) -> Tensor:
    def back(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), back)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def back(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), back)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    lo_c, hi_c = a.dtype.type(lo), a.dtype.type(hi)
    out = np.clip(a.data, lo_c, hi_c)
    inside = (a.data >= lo_c) & (a.data <= hi_c)

    def back(g):
        return (g * inside,)

    return _make(out, (a,), back)


def tsum(a: Tensor) -> Tensor:
    """Full reduction to a scalar tensor."""

    def back(g):
        return (np.full_like(a.data, g),)

    return _make(np.array(a.data.sum(), dtype=a.dtype), (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.data.shape} @ {b.data.shape}")

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), back)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Column slice of a 2-D tensor (used to split fused gate matrices)."""
    if a.data.ndim != 2:
        raise ShapeError("slice_cols expects a 2-D tensor")

    def back(g):
        ga = np.zeros_like(a.data)
        ga[:, start:stop] = g
        return (ga,)

    return _make(a.data[:, start:stop].copy(), (a,), back)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    _check_same_shape(a, b)
    take_a = a.data >= b.data

    def back(g):
        return g * take_a, g * ~take_a

    return _make(np.where(take_a, a.data, b.data), (a, b), back)
