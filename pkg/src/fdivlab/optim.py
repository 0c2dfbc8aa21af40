"""First-order optimizers.  All of them minimise: pass ``-grad`` to ascend."""

from __future__ import annotations

import numpy as np

__all__ = ["Adam", "Momentum", "make_optimizer"]


class Momentum:
    """Heavy-ball SGD: ``v <- mu v + g``, ``x <- x - lr v``."""

    def __init__(self, lr: float, momentum: float = 0.9):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.momentum = momentum
        self._v = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self._v is None:
            self._v = np.zeros_like(params)
        self._v = self.momentum * self._v + grad
        return params - self.lr * self._v


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self._m = self._v = None
        self._t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self._m is None:
            self._m = np.zeros_like(params)
            self._v = np.zeros_like(params)
        self._t += 1
        self._m = self.beta1 * self._m + (1 - self.beta1) * grad
        self._v = self.beta2 * self._v + (1 - self.beta2) * grad**2
        mhat = self._m / (1 - self.beta1**self._t)
        vhat = self._v / (1 - self.beta2**self._t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(name: str, lr: float, momentum: float = 0.9):
    if name == "momentum":
        return Momentum(lr, momentum)
    if name == "adam":
        return Adam(lr, beta1=momentum)
    raise ValueError(f"unknown optimizer {name!r}; expected 'momentum' or 'adam'")
