"""Small trainable building blocks shared by the model components."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class Linear:
    """Affine map ``x @ W + b`` with uniform +-1/sqrt(d_in) init."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int,
                 bias: bool = True, zero_init: bool = False):
        if zero_init:
            weight = np.zeros((d_in, d_out))
        else:
            bound = 1.0 / np.sqrt(d_in)
            weight = rng.uniform(-bound, bound, size=(d_in, d_out))
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        params = {f"{prefix}.weight": self.weight}
        if self.bias is not None:
            params[f"{prefix}.bias"] = self.bias
        return params


class LayerNorm:
    """Per-row normalization over the last axis with learnable scale/shift."""

    def __init__(self, width: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(width), requires_grad=True)
        self.beta = Tensor(np.zeros(width), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = ag.tmean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = ag.tmean(centered * centered, axis=-1, keepdims=True)
        inv = (var + Tensor(self.eps)) ** -0.5
        return centered * inv * self.gamma + self.beta

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


class FeedForward:
    """Two-layer ReLU MLP used as the integration sublayer."""

    def __init__(self, rng: np.random.Generator, width: int, hidden: int):
        self.lin1 = Linear(rng, width, hidden)
        self.lin2 = Linear(rng, hidden, width)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(ag.relu(self.lin1(x)))

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {**self.lin1.parameters(f"{prefix}.lin1"),
                **self.lin2.parameters(f"{prefix}.lin2")}
