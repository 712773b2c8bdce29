"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInput
from .tensor import Tensor


class Adam:
    """Standard Adam; first/second moments persist across steps.

    Moments are stored per parameter in list order so a checkpoint can
    serialize and restore them exactly.
    """

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Tensor] = list(params)
        if not self.params:
            raise InvalidInput("optimizer needs at least one parameter")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        missing = [i for i, p in enumerate(self.params) if p.grad is None]
        if missing:
            raise InvalidInput(f"parameters {missing} have no gradient")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state: dict):
        self.t = int(state["t"])
        for buf, new in zip(self.m, state["m"]):
            buf[...] = new
        for buf, new in zip(self.v, state["v"]):
            buf[...] = new
