"""Minimal reverse-mode autodiff: tensors, the layer set, Adam, and grad checks."""

from .gradcheck import check_gradients, numeric_gradient, scalarize
from .layers import (
    RunningStats,
    adaptive_maxpool_1d,
    batchnorm,
    bilinear_up2,
    channelwise_max,
    concat,
    conv2d,
    dropout,
    film,
    layer_forward,
    leaky_relu,
    linear,
    lstm_cell,
    relu,
    sigmoid,
    softmax,
)
from .optim import Adam
from .tensor import (
    Tensor,
    add,
    backward,
    clamp,
    log,
    matmul,
    maximum,
    mul,
    neg,
    no_grad,
    rsub,
    slice_cols,
    sub,
    tanh,
    tsum,
)

__all__ = [
    "Adam",
    "RunningStats",
    "Tensor",
    "adaptive_maxpool_1d",
    "add",
    "backward",
    "batchnorm",
    "bilinear_up2",
    "channelwise_max",
    "check_gradients",
    "clamp",
    "concat",
    "conv2d",
    "dropout",
    "film",
    "layer_forward",
    "leaky_relu",
    "linear",
    "log",
    "lstm_cell",
    "matmul",
    "maximum",
    "mul",
    "neg",
    "no_grad",
    "numeric_gradient",
    "relu",
    "rsub",
    "scalarize",
    "sigmoid",
    "slice_cols",
    "softmax",
    "sub",
    "tanh",
    "tsum",
]
