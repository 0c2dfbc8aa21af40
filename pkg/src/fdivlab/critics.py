"""Parametric critic families ``d_nu(x)``.

Every critic exposes the same small surface:

* ``params`` -- flat parameter vector ``nu`` (a numpy array, updated in place
  by optimizers through :meth:`set_params`);
* ``__call__(x)`` -- critic values, shape ``(n,)``;
* ``vjp(x, w)`` -- ``sum_n w_n dd(x_n)/dnu``, the only parameter gradient
  the estimators need;
* ``grad_x(x)`` -- ``dd/dx`` with shape ``(n, dim)`` for continuous inputs.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "AffineFeatureCritic",
    "MLPCritic",
    "TabularCritic",
    "critic_from_descriptor",
    "polynomial_features",
]


class Critic:
    params: np.ndarray

    def set_params(self, params) -> None:
        params = np.asarray(params, dtype=float)
        if params.shape != self.params.shape:
            raise ValueError(f"expected {self.params.shape} parameters, got {params.shape}")
        self.params = params.copy()

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def vjp(self, x, weights) -> np.ndarray:
        raise NotImplementedError

    def grad_x(self, x) -> np.ndarray:
        raise TypeError(f"{type(self).__name__} has no input gradient")

    def param_jacobian(self, x) -> np.ndarray:
        """Per-sample ``dd(x_n)/dnu``, shape ``(n, num_params)``.  Slow; for tests."""
        x = np.asarray(x)
        n = x.shape[0]
        return np.stack([self.vjp(x[i : i + 1], np.ones(1)) for i in range(n)])

    def descriptor(self) -> dict:
        raise NotImplementedError


class TabularCritic(Critic):
    """One free value per support point of a discrete distribution."""

    def __init__(self, n: int, params=None):
        self.n = int(n)
        self.params = np.zeros(self.n) if params is None else np.array(params, dtype=float)

    def __call__(self, x):
        return self.params[np.asarray(x, dtype=int)]

    def vjp(self, x, weights):
        return np.bincount(np.asarray(x, dtype=int), weights=np.asarray(weights, float), minlength=self.n)

    def descriptor(self) -> dict:
        return {"type": "tabular", "n": self.n}


def polynomial_features(degree: int) -> tuple[Callable, Callable]:
    """Feature map ``x -> (x, x^2, ..., x^degree)`` for 1-D inputs and its derivative."""

    def phi(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.stack([x**k for k in range(1, degree + 1)], axis=1)

    def dphi(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.stack([k * x ** (k - 1) for k in range(1, degree + 1)], axis=1)

    return phi, dphi


class AffineFeatureCritic(Critic):
    """``d(x) = w . phi(x) + c`` for a fixed feature map ``phi``.

    ``params`` is ``(w_1, ..., w_m, c)``.  ``dphi`` is the derivative of the
    features for 1-D inputs; it is only needed for generator gradients.
    """

    def __init__(self, features: Callable, num_features: int, dphi: Callable | None = None, params=None, degree=None):
        self.phi = features
        self.dphi = dphi
        self.num_features = int(num_features)
        self.degree = degree
        self.params = np.zeros(self.num_features + 1) if params is None else np.array(params, dtype=float)

    @classmethod
    def polynomial(cls, degree: int, params=None) -> "AffineFeatureCritic":
        phi, dphi = polynomial_features(degree)
        return cls(phi, degree, dphi, params=params, degree=degree)

    def __call__(self, x):
        return self.phi(x) @ self.params[:-1] + self.params[-1]

    def vjp(self, x, weights):
        weights = np.asarray(weights, dtype=float)
        return np.append(weights @ self.phi(x), weights.sum())

    def grad_x(self, x):
        if self.dphi is None:
            raise TypeError("feature map has no derivative")
        return (self.dphi(x) @ self.params[:-1])[:, None]

    def descriptor(self) -> dict:
        if self.degree is None:
            raise TypeError("only polynomial feature critics have a descriptor")
        return {"type": "polynomial", "degree": self.degree}


class MLPCritic(Critic):
    """Fully connected tanh network with a scalar linear output.

    Weights use a symmetric uniform initialisation ``U(-1/sqrt(fan_in),
    1/sqrt(fan_in))``; the output layer starts at zero so the initial critic
    is ``d = 0``.  Backpropagation is written out by hand.
    """

    def __init__(self, input_dim: int = 1, hidden: Sequence[int] = (32, 32), rng: np.random.Generator | None = None):
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        sizes = (self.input_dim, *self.hidden, 1)
        self._shapes = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self._shapes.append(((fan_in, fan_out), (fan_out,)))
        rng = np.random.default_rng(0) if rng is None else rng
        parts = []
        for layer, ((fan_in, fan_out), _) in enumerate(self._shapes):
            if layer == len(self._shapes) - 1:
                parts += [np.zeros(fan_in * fan_out), np.zeros(fan_out)]
            else:
                bound = 1.0 / np.sqrt(fan_in)
                parts += [rng.uniform(-bound, bound, fan_in * fan_out), np.zeros(fan_out)]
        self.params = np.concatenate(parts)

    def _layers(self, params=None):
        params = self.params if params is None else params
        out, i = [], 0
        for (wshape, bshape) in self._shapes:
            nw = wshape[0] * wshape[1]
            W = params[i : i + nw].reshape(wshape)
            i += nw
            b = params[i : i + bshape[0]]
            i += bshape[0]
            out.append((W, b))
        return out

    def _inputs(self, x):
        x = np.asarray(x, dtype=float)
        if self.input_dim == 1:
            return x.reshape(-1, 1)
        return x.reshape(-1, self.input_dim)

    def _forward(self, x):
        h = self._inputs(x)
        acts = [h]
        layers = self._layers()
        for W, b in layers[:-1]:
            h = np.tanh(h @ W + b)
            acts.append(h)
        W, b = layers[-1]
        return (h @ W + b)[:, 0], acts, layers

    def __call__(self, x):
        return self._forward(x)[0]

    def _backward(self, acts, layers, delta):
        """Backpropagate ``delta = dL/d(output)``; returns (param grads, dL/dx)."""
        grads = []
        g = delta[:, None]
        for layer in range(len(layers) - 1, -1, -1):
            W, _ = layers[layer]
            h_in = acts[layer]
            grads.append((h_in.T @ g, g.sum(axis=0)))
            g = g @ W.T
            if layer > 0:
                g = g * (1.0 - h_in**2)
        flat = []
        for gW, gb in reversed(grads):
            flat += [gW.ravel(), gb]
        return np.concatenate(flat), g

    def vjp(self, x, weights):
        _, acts, layers = self._forward(x)
        return self._backward(acts, layers, np.asarray(weights, dtype=float))[0]

    def grad_x(self, x):
        _, acts, layers = self._forward(x)
        return self._backward(acts, layers, np.ones(acts[0].shape[0]))[1]

    def descriptor(self) -> dict:
        return {"type": "mlp", "input_dim": self.input_dim, "hidden": list(self.hidden)}


def critic_from_descriptor(desc: Mapping[str, Any], rng: np.random.Generator | None = None) -> Critic:
    kind = desc.get("type")
    if kind == "tabular":
        return TabularCritic(int(desc["n"]), params=desc.get("params"))
    if kind == "polynomial":
        return AffineFeatureCritic.polynomial(int(desc.get("degree", 2)), params=desc.get("params"))
    if kind == "mlp":
        critic = MLPCritic(int(desc.get("input_dim", 1)), desc.get("hidden", (32, 32)), rng=rng)
        if desc.get("params") is not None:
            critic.set_params(desc["params"])
        return critic
    raise ValueError(f"unknown critic type {kind!r}")
