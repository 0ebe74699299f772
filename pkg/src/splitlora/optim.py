"""Adam with decoupled weight decay over plain numpy arrays."""

from __future__ import annotations

import numpy as np


class AdamW:
    """Bias-corrected Adam; weight decay is applied directly to the parameter.

    Parameters are registered by name and updated in place by ``step``.
    """

    def __init__(self, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.steps: dict[str, int] = {}

    def step(self, name: str, param: np.ndarray, grad: np.ndarray) -> None:
        if param.shape != grad.shape:
            raise ValueError(f"{name}: gradient {grad.shape} does not match parameter {param.shape}")
        if name not in self.m:
            self.m[name] = np.zeros_like(param)
            self.v[name] = np.zeros_like(param)
            self.steps[name] = 0
        self.steps[name] += 1
        t = self.steps[name]
        m, v = self.m[name], self.v[name]
        m *= self.beta1
        m += (1 - self.beta1) * grad
        v *= self.beta2
        v += (1 - self.beta2) * grad * grad
        if self.weight_decay:
            param *= 1 - self.lr * self.weight_decay
        m_hat = m / (1 - self.beta1 ** t)
        v_hat = v / (1 - self.beta2 ** t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
