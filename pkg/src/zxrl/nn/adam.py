"""ADAM optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Adam:
    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {f"adam/m/{k}": v for k, v in self.m.items()}
        out.update({f"adam/v/{k}": v for k, v in self.v.items()})
        out["adam/t"] = np.array([float(self.t)])
        return out

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        for k in self.m:
            self.m[k] = tensors[f"adam/m/{k}"].copy()
            self.v[k] = tensors[f"adam/v/{k}"].copy()
        self.t = int(tensors["adam/t"][0])
