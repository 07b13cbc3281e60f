"""Dense layers, MLPs, and orthogonal initialization."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    """Orthogonal weight matrix: W.T @ W = gain^2 I when tall, transposed when wide."""
    big, small = max(n_in, n_out), min(n_in, n_out)
    a = rng.standard_normal((big, small))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q


class Dense:
    """Single dense layer  y = act(x @ W + b)."""

    def __init__(self, name: str, n_in: int, n_out: int, activation: str | None = "tanh"):
        if activation not in (None, "tanh"):
            raise ValueError(f"unknown activation {activation!r}")
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        self.W = ad.parameter(np.zeros((n_in, n_out)))
        self.b = ad.parameter(np.zeros(n_out))

    def init(self, rng: np.random.Generator, gain: float) -> None:
        self.W.value[...] = orthogonal(rng, self.n_in, self.n_out, gain)
        self.b.value[...] = 0.0

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.add(ad.matmul(x, self.W), self.b)
        return ad.tanh(y) if self.activation == "tanh" else y

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}/W": self.W, f"{self.name}/b": self.b}


class MLP:
    """Dense stack with tanh hidden layers and a linear output layer."""

    def __init__(self, name: str, sizes: list[int]):
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
            last = i == len(sizes) - 2
            self.layers.append(Dense(f"{name}/l{i}", a, b, None if last else "tanh"))

    def init(self, rng: np.random.Generator, hidden_gain: float, out_gain: float) -> None:
        for layer in self.layers[:-1]:
            layer.init(rng, hidden_gain)
        self.layers[-1].init(rng, out_gain)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for layer in self.layers:
            out.update(layer.params())
        return out
