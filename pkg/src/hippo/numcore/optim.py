"""Adam-style adaptive gradient descent over named parameter tensors."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from ..errors import ParameterError
from .tensor import Tensor


class Adam:
    """Updates parameter ``.data`` in a fixed (sorted-name) order each step."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ParameterError("learning rate must be positive")
        self.params = dict(params)
        self.lr = float(lr)
        self.b1, self.b2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self) -> None:
        """Consume accumulated ``.grad`` on every parameter and clear it."""
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name in sorted(self.params):
            p = self.params[name]
            g = p.grad
            if g is None:
                continue
            m = self._m[name] = self.b1 * self._m[name] + (1.0 - self.b1) * g
            v = self._v[name] = self.b2 * self._v[name] + (1.0 - self.b2) * (g * g)
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
