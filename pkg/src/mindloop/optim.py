"""Adam optimizer with bias-corrected moments, float32 state."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


class Adam:
    """Holds first/second moment accumulators per parameter and a step counter."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = np.float32(lr)
        self.beta1 = np.float32(beta1)
        self.beta2 = np.float32(beta2)
        self.eps = np.float32(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        """Apply one bias-corrected update; parameters without grads keep their value."""
        self.t += 1
        b1t = np.float32(1.0) - self.beta1 ** np.float32(self.t)
        b2t = np.float32(1.0) - self.beta2 ** np.float32(self.t)
        one = np.float32(1.0)
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            m *= self.beta1
            m += (one - self.beta1) * g
            v *= self.beta2
            v += (one - self.beta2) * (g * g)
            m_hat = m / b1t
            v_hat = v / b2t
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
