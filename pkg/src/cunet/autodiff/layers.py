"""Neural-network layers with hand-derived backward passes.

The layer set is closed: exactly the operations the separator architectures
need. Convolutions run as gather -> GEMM -> scatter with numpy, which keeps
the whole engine auditable while staying fast enough for CPU training at
reduced scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import InvalidInput, ShapeError
from .tensor import Tensor, _make, add, matmul, maximum, mul, slice_cols, tanh


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    b, cin = xp.shape[:2]
    cols = np.empty((b, cin, kh, kw, oh, ow), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride]
    return cols.reshape(b, cin * kh * kw, oh * ow)


def _col2im(dcols: np.ndarray, xp_shape, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    b, cin = xp_shape[:2]
    dxp = np.zeros(xp_shape, dtype=dcols.dtype)
    dcols = dcols.reshape(b, cin, kh, kw, oh, ow)
    for ki in range(kh):
        for kj in range(kw):
            dxp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += dcols[:, :, ki, kj]
    return dxp


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int, padding: int) -> Tensor:
    """2-D convolution (cross-correlation) over (B, C, H, W) maps."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weights")
    bsz, cin, h, width = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ShapeError(f"input has {cin} channels but weights expect {cin_w}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (width + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"kernel {kh}x{kw} does not fit input {h}x{width}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    w_mat = w.data.reshape(cout, -1)
    y = np.matmul(w_mat, cols)
    if b is not None:
        y = y + b.data[:, None]
    y = y.reshape(bsz, cout, oh, ow)
    parents = (x, w) if b is None else (x, w, b)
    # The column buffer dominates memory at full resolution; rebuild it in the
    # backward pass instead of keeping it alive in the closure.
    del cols

    def back(g):
        g_mat = g.reshape(bsz, cout, oh * ow)
        cols = _im2col(xp, kh, kw, stride, oh, ow)
        dw = np.einsum("bco,bko->ck", g_mat, cols).reshape(w.data.shape)
        del cols
        dcols = np.matmul(w_mat.T, g_mat)
        dxp = _col2im(dcols, xp.shape, kh, kw, stride, oh, ow)
        dx = dxp[:, :, padding : padding + h, padding : padding + width]
        if padding == 0:
            dx = dx.copy()
        if b is None:
            return dx, dw
        return dx, dw, g_mat.sum(axis=(0, 2))

    return _make(y, parents, back)


def _up2_last(x: np.ndarray) -> np.ndarray:
    # Scale-2 bilinear on the last axis, half-pixel-centered sampling:
    # out[2k] = 0.25*x[k-1] + 0.75*x[k], out[2k+1] = 0.75*x[k] + 0.25*x[k+1].
    left = np.concatenate([x[..., :1], x[..., :-1]], axis=-1)
    right = np.concatenate([x[..., 1:], x[..., -1:]], axis=-1)
    even = 0.75 * x + 0.25 * left
    odd = 0.75 * x + 0.25 * right
    out = np.stack([even, odd], axis=-1)
    return out.reshape(*x.shape[:-1], 2 * x.shape[-1])


def _down2_last(g: np.ndarray) -> np.ndarray:
    # Adjoint of _up2_last.
    ge = g[..., 0::2]
    go = g[..., 1::2]
    dx = 0.75 * (ge + go)
    dx[..., :-1] += 0.25 * ge[..., 1:]
    dx[..., 0] += 0.25 * ge[..., 0]
    dx[..., 1:] += 0.25 * go[..., :-1]
    dx[..., -1] += 0.25 * go[..., -1]
    return dx


def bilinear_up2(x: Tensor) -> Tensor:
    """Bilinear upsampling by 2 in both spatial dims of a (B, C, H, W) map."""
    if x.data.ndim != 4:
        raise ShapeError("bilinear_up2 expects a 4-D tensor")
    y = _up2_last(np.swapaxes(_up2_last(np.swapaxes(x.data, 2, 3)), 2, 3))

    def back(g):
        dx = np.swapaxes(_down2_last(np.swapaxes(_down2_last(g), 2, 3)), 2, 3)
        return (np.ascontiguousarray(dx),)

    return _make(np.ascontiguousarray(y), (x,), back)


@dataclass
class RunningStats:
    """Batch-norm inference statistics, updated in training mode."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def for_channels(cls, c: int, dtype=np.float32):
        return cls(np.zeros(c, dtype=dtype), np.ones(c, dtype=dtype))


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: RunningStats | None = None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (B, C, H, W)."""
    if x.data.ndim != 4:
        raise ShapeError("batchnorm expects a 4-D tensor")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError("gamma/beta must have one value per channel")
    axes = (0, 2, 3)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running is not None:
            n = x.data.size // c
            unbiased = var * (n / max(n - 1, 1))
            running.mean += momentum * (mu - running.mean)
            running.var += momentum * (unbiased - running.var)
    else:
        if running is None:
            raise InvalidInput("eval-mode batchnorm needs running statistics")
        mu = running.mean.astype(x.dtype)
        var = running.var.astype(x.dtype)
    ivar = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = (x.data - mu[:, None, None]) * ivar[:, None, None]
    y = gamma.data[:, None, None] * xhat + beta.data[:, None, None]

    def back(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data[:, None, None]
        if training:
            dx = (
                dxhat
                - dxhat.mean(axis=axes)[:, None, None]
                - xhat * (dxhat * xhat).mean(axis=axes)[:, None, None]
            ) * ivar[:, None, None]
        else:
            dx = dxhat * ivar[:, None, None]
        return dx, dgamma, dbeta

    return _make(y, (x, gamma, beta), back)


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0

    def back(g):
        return (g * pos,)

    return _make(np.where(pos, x.data, x.dtype.type(0)), (x,), back)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    a = x.dtype.type(slope)
    pos = x.data > 0

    def back(g):
        return (np.where(pos, g, g * a),)

    return _make(np.where(pos, x.data, x.data * a), (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)

    def back(g):
        return (g * y * (1.0 - y),)

    return _make(y, (x,), back)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _make(y, (x,), back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity in eval mode."""
    if not training or p == 0.0:
        return x
    if rng is None:
        raise InvalidInput("training-mode dropout needs a random generator")
    scale = 1.0 / (1.0 - p)
    keep = (rng.random(x.data.shape) >= p).astype(x.dtype) * x.dtype.type(scale)

    def back(g):
        return (g * keep,)

    return _make(x.data * keep, (x,), back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map of (B, D_in) rows: x @ w + b."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear shapes incompatible: {x.data.shape} @ {w.data.shape}")
    y = x.data @ w.data
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError("bias must have one value per output feature")
        y = y + b.data
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        if b is None:
            return g @ w.data.T, x.data.T @ g
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _make(y, parents, back)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor):
    """Standard LSTM cell; gate order is (input, forget, cell, output).

    Returns the pair (h_next, c_next). Composed from primitive ops, so the
    backward pass follows from theirs.
    """
    hidden = h.data.shape[1]
    if w_ih.data.shape[1] != 4 * hidden or w_hh.data.shape != (hidden, 4 * hidden):
        raise ShapeError("LSTM weight shapes do not match the hidden size")
    z = add(matmul(x, w_ih), matmul(h, w_hh))
    z = _add_bias(z, b)
    i = sigmoid(slice_cols(z, 0, hidden))
    f = sigmoid(slice_cols(z, hidden, 2 * hidden))
    g = tanh(slice_cols(z, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_cols(z, 3 * hidden, 4 * hidden))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


def _add_bias(x: Tensor, b: Tensor) -> Tensor:
    if b.data.shape != (x.data.shape[1],):
        raise ShapeError("bias shape must match the feature dimension")

    def back(g):
        return g, g.sum(axis=0)

    return _make(x.data + b.data, (x, b), back)


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate along ``axis``; the backward pass splits the gradient."""
    tensors = list(tensors)
    if not tensors:
        raise InvalidInput("concat needs at least one tensor")
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def adaptive_maxpool_1d(x: Tensor, out_size: int) -> Tensor:
    """Max over contiguous bins reducing (B, D) to (B, out_size)."""
    if x.data.ndim != 2:
        raise ShapeError("adaptive_maxpool_1d expects a 2-D tensor")
    bsz, d = x.data.shape
    if out_size <= 0 or out_size > d:
        raise InvalidInput(f"cannot pool {d} features into {out_size} bins")
    if d % out_size == 0:
        k = d // out_size
        xr = x.data.reshape(bsz, out_size, k)
        idx = xr.argmax(axis=2)
        y = np.take_along_axis(xr, idx[:, :, None], axis=2)[:, :, 0]

        def back(g):
            dxr = np.zeros_like(xr)
            np.put_along_axis(dxr, idx[:, :, None], g[:, :, None], axis=2)
            return (dxr.reshape(bsz, d),)

        return _make(y, (x,), back)
    # Uneven bins mirror the floor/ceil boundaries of adaptive pooling.
    starts = (np.arange(out_size) * d) // out_size
    ends = -(-(np.arange(1, out_size + 1) * d) // out_size)
    y = np.empty((bsz, out_size), dtype=x.dtype)
    argpos = np.empty((bsz, out_size), dtype=np.intp)
    for j, (s, e) in enumerate(zip(starts, ends)):
        seg = x.data[:, s:e]
        pos = seg.argmax(axis=1)
        argpos[:, j] = pos + s
        y[:, j] = np.take_along_axis(seg, pos[:, None], axis=1)[:, 0]

    def back(g):
        dx = np.zeros_like(x.data)
        np.put_along_axis(dx, argpos, g, axis=1)
        return (dx,)

    return _make(y, (x,), back)


def channelwise_max(tensors) -> Tensor:
    """Elementwise maximum across a list of same-shaped tensors."""
    tensors = list(tensors)
    if not tensors:
        raise InvalidInput("channelwise_max needs at least one tensor")
    out = tensors[0]
    for t in tensors[1:]:
        out = maximum(out, t)
    return out


def film(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Channel-wise affine modulation of (B, C, H, W) by per-sample (B, C) params."""
    if x.data.ndim != 4 or gamma.data.shape != x.data.shape[:2] or beta.data.shape != x.data.shape[:2]:
        raise ShapeError(
            f"film expects (B,C,H,W) input with (B,C) parameters, got {x.data.shape}, "
            f"{gamma.data.shape}, {beta.data.shape}"
        )
    g4 = gamma.data[:, :, None, None]

    def back(g):
        dgamma = (g * x.data).sum(axis=(2, 3))
        dbeta = g.sum(axis=(2, 3))
        return g * g4, dgamma, dbeta

    return _make(g4 * x.data + beta.data[:, :, None, None], (x, gamma, beta), back)


_KINDS = (
    "conv4x4_s2_p1",
    "conv3x3_s1_p1",
    "bilinear_up2",
    "batchnorm",
    "leaky_relu",
    "relu",
    "sigmoid",
    "softmax",
    "dropout",
    "linear",
    "lstm_cell",
    "concat",
    "adaptive_maxpool_1d",
    "channelwise_max",
)


def layer_forward(kind: str, *args, training: bool = False, rng=None, **kwargs):
    """Dispatch a layer by name; the single entry point used by shape tests."""
    if kind == "conv4x4_s2_p1":
        x, w, b = args
        if w.data.shape[2:] != (4, 4):
            raise ShapeError("conv4x4_s2_p1 needs a 4x4 kernel")
        return conv2d(x, w, b, stride=2, padding=1)
    if kind == "conv3x3_s1_p1":
        x, w, b = args
        if w.data.shape[2:] != (3, 3):
            raise ShapeError("conv3x3_s1_p1 needs a 3x3 kernel")
        return conv2d(x, w, b, stride=1, padding=1)
    if kind == "bilinear_up2":
        return bilinear_up2(args[0])
    if kind == "batchnorm":
        x, gamma, beta = args
        return batchnorm(x, gamma, beta, training=training, **kwargs)
    if kind == "leaky_relu":
        return leaky_relu(args[0], kwargs.get("slope", 0.2))
    if kind == "relu":
        return relu(args[0])
    if kind == "sigmoid":
        return sigmoid(args[0])
    if kind == "softmax":
        return softmax(args[0], kwargs.get("axis", -1))
    if kind == "dropout":
        return dropout(args[0], kwargs.get("p", 0.2), training, rng)
    if kind == "linear":
        return linear(*args)
    if kind == "lstm_cell":
        return lstm_cell(*args)[0]
    if kind == "concat":
        return concat(args, axis=kwargs.get("axis", 1))
    if kind == "adaptive_maxpool_1d":
        return adaptive_maxpool_1d(args[0], kwargs["out_size"])
    if kind == "channelwise_max":
        return channelwise_max(args)
    raise InvalidInput(f"unknown layer kind {kind!r}")
