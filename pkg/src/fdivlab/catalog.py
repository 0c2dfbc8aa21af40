"""Defining functions of the common f-divergences and their algebra.

Every builtin is stored in canonical form (``f''(1) == 1``) with the
normalisation ``f(1) == f'(1) == 0``.  Besides ``f`` and its first two
derivatives each spec carries the tangent-line coefficients used by the
variational lower bound,

    a(d) = f'(e^d)
    b(d) = e^d f'(e^d) - f(e^d)

together with their derivatives ``a1`` and ``b1``.  All callables accept
scalars or numpy arrays and are evaluated in forms that stay finite for
``|d|`` up to a few hundred wherever the exact value is finite.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, log_expit, xlogy

from fdivlab.distributions import DiscreteDistribution

__all__ = [
    "BUILTIN_NAMES",
    "CatalogError",
    "DivergenceSpec",
    "builtin",
    "canonicalize",
    "combine",
    "reverse",
    "scale",
    "two_point_construction",
]

Fn = Callable[[np.ndarray], np.ndarray]

LOG2 = np.log(2.0)


class CatalogError(ValueError):
    """Unknown divergence name or invalid algebraic construction."""


@dataclass(frozen=True)
class DivergenceSpec:
    """A named f-divergence.

    ``f``, ``f1`` and ``f2`` act on likelihood ratios ``u > 0``; ``a``, ``b``,
    ``a1`` and ``b1`` act on log ratios ``d``.  ``tail_weights`` is
    descriptive metadata (left, right) and is never computed.
    """

    name: str
    f: Fn
    f1: Fn
    f2: Fn
    a: Fn
    b: Fn
    a1: Fn
    b1: Fn
    tail_weights: tuple[float, float] | None = None
    curvature_at_one: float = 1.0
    f2_formula: str = ""

    def __repr__(self) -> str:
        return f"DivergenceSpec({self.name!r}, curvature_at_one={self.curvature_at_one!r})"


_FIELDS = ("f", "f1", "f2", "a", "b", "a1", "b1")


def _vectorized(fn: Fn) -> Fn:
    def wrapped(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = fn(x)
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)

    wrapped.__name__ = getattr(fn, "__name__", "fn")
    return wrapped


def _spec(name, tail_weights, formula, **fns) -> DivergenceSpec:
    return DivergenceSpec(
        name=name,
        tail_weights=tail_weights,
        f2_formula=formula,
        curvature_at_one=1.0,
        **{k: _vectorized(fns[k]) for k in _FIELDS},
    )


def _log_sigmoid(d):
    return log_expit(d)


def _sigmoid(d):
    return expit(d)


# Individual divergences.  f(0) is returned as +inf where the limit diverges.


def _kl() -> DivergenceSpec:
    return _spec(
        "kl",
        (1.0, 2.0),
        "1/u",
        f=lambda u: xlogy(u, u) - u + 1.0,
        f1=lambda u: np.log(u),
        f2=lambda u: 1.0 / u,
        a=lambda d: d + 0.0,
        b=lambda d: np.expm1(d),
        a1=lambda d: np.ones_like(d),
        b1=lambda d: np.exp(d),
    )


def _reverse_kl() -> DivergenceSpec:
    return _spec(
        "reverse_kl",
        (2.0, 1.0),
        "1/u^2",
        f=lambda u: np.where(u > 0, -np.log(u) + u - 1.0, np.inf),
        f1=lambda u: 1.0 - 1.0 / u,
        f2=lambda u: u**-2.0,
        a=lambda d: -np.expm1(-d),
        b=lambda d: d + 0.0,
        a1=lambda d: np.exp(-d),
        b1=lambda d: np.ones_like(d),
    )


def _jensen_shannon() -> DivergenceSpec:
    def f(u):
        return 2.0 * xlogy(u, u) - 2.0 * (u + 1.0) * np.log1p(u) + 2.0 * u * LOG2 + 2.0 * LOG2

    return _spec(
        "jensen_shannon",
        (1.0, 1.0),
        "2/(u(1+u))",
        f=f,
        f1=lambda u: 2.0 * (np.log(u) - np.log1p(u) + LOG2),
        f2=lambda u: 2.0 / (u * (u + 1.0)),
        a=lambda d: 2.0 * _log_sigmoid(d) + 2.0 * LOG2,
        b=lambda d: -2.0 * _log_sigmoid(-d) - 2.0 * LOG2,
        a1=lambda d: 2.0 * _sigmoid(-d),
        b1=lambda d: 2.0 * _sigmoid(d),
    )


def _squared_hellinger() -> DivergenceSpec:
    return _spec(
        "squared_hellinger",
        (1.5, 1.5),
        "u^(-3/2)",
        f=lambda u: 2.0 * (1.0 - np.sqrt(u)) ** 2,
        f1=lambda u: 2.0 - 2.0 / np.sqrt(u),
        f2=lambda u: u**-1.5,
        a=lambda d: -2.0 * np.expm1(-0.5 * d),
        b=lambda d: 2.0 * np.expm1(0.5 * d),
        a1=lambda d: np.exp(-0.5 * d),
        b1=lambda d: np.exp(0.5 * d),
    )


def _le_cam() -> DivergenceSpec:
    return _spec(
        "le_cam",
        (0.0, 0.0),
        "8/(1+u)^3",
        f=lambda u: (u - 1.0) ** 2 / (1.0 + u),
        f1=lambda u: (u - 1.0) * (u + 3.0) / (1.0 + u) ** 2,
        f2=lambda u: 8.0 / (1.0 + u) ** 3,
        a=lambda d: 1.0 - 4.0 * _sigmoid(-d) ** 2,
        b=lambda d: 4.0 * _sigmoid(d) ** 2 - 1.0,
        a1=lambda d: 8.0 * _sigmoid(d) * _sigmoid(-d) ** 2,
        b1=lambda d: 8.0 * _sigmoid(d) ** 2 * _sigmoid(-d),
    )


def _pearson_chi2() -> DivergenceSpec:
    return _spec(
        "pearson_chi2",
        (0.0, 3.0),
        "1",
        f=lambda u: 0.5 * (u - 1.0) ** 2,
        f1=lambda u: u - 1.0,
        f2=lambda u: np.ones_like(u),
        a=lambda d: np.expm1(d),
        b=lambda d: 0.5 * np.expm1(2.0 * d),
        a1=lambda d: np.exp(d),
        b1=lambda d: np.exp(2.0 * d),
    )


def _neymann() -> DivergenceSpec:
    return _spec(
        "neymann",
        (3.0, 0.0),
        "1/u^3",
        f=lambda u: np.where(u > 0, (u - 1.0) ** 2 / (2.0 * u), np.inf),
        f1=lambda u: 0.5 * (1.0 - u**-2.0),
        f2=lambda u: u**-3.0,
        a=lambda d: -0.5 * np.expm1(-2.0 * d),
        b=lambda d: -np.expm1(-d),
        a1=lambda d: np.exp(-2.0 * d),
        b1=lambda d: np.exp(-d),
    )


def _softened_reverse_kl() -> DivergenceSpec:
    # Normalised so that f'(1) = 0; differs from 2(u+1)log((u+1)/u) - 4log2
    # by the affine term 2(1 - log 2)(u - 1), which leaves D_f unchanged.
    def f(u):
        return np.where(
            u > 0,
            2.0 * (u + 1.0) * (np.log1p(u) - np.log(u) - LOG2) + 2.0 * (u - 1.0),
            np.inf,
        )

    return _spec(
        "softened_reverse_kl",
        (2.0, 0.0),
        "2/(u^2(1+u))",
        f=f,
        f1=lambda u: 2.0 * (np.log1p(u) - np.log(u) - LOG2) - 2.0 / u + 2.0,
        f2=lambda u: 2.0 / (u**2 * (u + 1.0)),
        a=lambda d: -2.0 * np.exp(-d) - 2.0 * _log_sigmoid(d) + 2.0 - 2.0 * LOG2,
        b=lambda d: 2.0 * _log_sigmoid(d) + 2.0 * LOG2,
        a1=lambda d: 2.0 * np.exp(-d) * _sigmoid(-d),
        b1=lambda d: 2.0 * _sigmoid(-d),
    )


def _jeffreys() -> DivergenceSpec:
    mean = combine(0.5, _kl(), 0.5, _reverse_kl())
    return dataclasses.replace(
        mean, name="jeffreys", tail_weights=(2.0, 2.0), f2_formula="(1+u)/(2u^2)"
    )


_BUILDERS = {
    "kl": _kl,
    "reverse_kl": _reverse_kl,
    "jensen_shannon": _jensen_shannon,
    "squared_hellinger": _squared_hellinger,
    "jeffreys": _jeffreys,
    "le_cam": _le_cam,
    "pearson_chi2": _pearson_chi2,
    "neymann": _neymann,
    "softened_reverse_kl": _softened_reverse_kl,
}

BUILTIN_NAMES: tuple[str, ...] = tuple(_BUILDERS)

_CACHE: dict[str, DivergenceSpec] = {}


def builtin(name: str) -> DivergenceSpec:
    """Return the canonical builtin divergence called ``name``."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise CatalogError(
            f"unknown divergence {name!r}; expected one of {', '.join(BUILTIN_NAMES)}"
        ) from None
    if name not in _CACHE:
        _CACHE[name] = builder()
    return _CACHE[name]


def _lift(spec_or_name: DivergenceSpec | str) -> DivergenceSpec:
    return builtin(spec_or_name) if isinstance(spec_or_name, str) else spec_or_name


def scale(spec: DivergenceSpec | str, k: float) -> DivergenceSpec:
    """Multiply the defining function (and every derived field) by ``k > 0``."""
    spec = _lift(spec)
    if not k > 0:
        raise CatalogError(f"scale factor must be positive, got {k!r}")
    if k == 1:
        return spec
    fns = {name: _scaled(getattr(spec, name), k) for name in _FIELDS}
    return dataclasses.replace(
        spec,
        name=f"{k!r}*{spec.name}",
        curvature_at_one=spec.curvature_at_one * k,
        **fns,
    )


def _scaled(fn: Fn, k: float) -> Fn:
    return _vectorized(lambda x: k * np.asarray(fn(x)))


def combine(
    alpha: float,
    spec_a: DivergenceSpec | str,
    beta: float,
    spec_b: DivergenceSpec | str,
) -> DivergenceSpec:
    """Pointwise linear combination ``alpha * A + beta * B``."""
    spec_a, spec_b = _lift(spec_a), _lift(spec_b)
    if alpha < 0 or beta < 0 or not alpha + beta > 0:
        raise CatalogError("combine needs nonnegative weights with a positive sum")

    def field(name):
        fa, fb = getattr(spec_a, name), getattr(spec_b, name)
        if beta == 0:
            return _vectorized(lambda x: alpha * np.asarray(fa(x)))
        if alpha == 0:
            return _vectorized(lambda x: beta * np.asarray(fb(x)))
        return _vectorized(lambda x: alpha * np.asarray(fa(x)) + beta * np.asarray(fb(x)))

    return DivergenceSpec(
        name=f"{alpha!r}*{spec_a.name}+{beta!r}*{spec_b.name}",
        curvature_at_one=alpha * spec_a.curvature_at_one + beta * spec_b.curvature_at_one,
        **{name: field(name) for name in _FIELDS},
    )


def reverse(spec: DivergenceSpec | str) -> DivergenceSpec:
    """Spec of ``g`` with ``D_g(p, q) = D_f(q, p)``.

    Uses ``g(u) = u f(1/u)``, ``a_g(d) = -b_f(-d)`` and ``b_g(d) = -a_f(-d)``,
    i.e. ``E_g(p, q, d) = E_f(q, p, -d)``.
    """
    spec = _lift(spec)
    f, f1, f2 = spec.f, spec.f1, spec.f2
    a, b, a1, b1 = spec.a, spec.b, spec.a1, spec.b1

    def g(u):
        return u * np.asarray(f(1.0 / u))

    tails = None if spec.tail_weights is None else spec.tail_weights[::-1]
    name = spec.name[len("reverse(") : -1] if spec.name.startswith("reverse(") else f"reverse({spec.name})"
    return DivergenceSpec(
        name=name,
        f=_vectorized(g),
        f1=_vectorized(lambda u: np.asarray(f(1.0 / u)) - np.asarray(f1(1.0 / u)) / u),
        f2=_vectorized(lambda u: np.asarray(f2(1.0 / u)) / u**3),
        a=_vectorized(lambda d: -np.asarray(b(-d))),
        b=_vectorized(lambda d: -np.asarray(a(-d))),
        a1=_vectorized(lambda d: np.asarray(b1(-d))),
        b1=_vectorized(lambda d: np.asarray(a1(-d))),
        tail_weights=tails,
        curvature_at_one=spec.curvature_at_one,
    )


def canonicalize(spec: DivergenceSpec | str) -> DivergenceSpec:
    spec = _lift(spec)
    if not spec.curvature_at_one > 0:
        raise CatalogError("cannot canonicalize a spec with non-positive curvature at 1")
    return scale(spec, 1.0 / spec.curvature_at_one)


def two_point_construction(u: float) -> tuple[DiscreteDistribution, DiscreteDistribution]:
    """Two-point pair ``(p, q)`` with ``p[0] / q[0] == u``.

    The second ratio is ``1/2`` when ``u > 1`` and ``2`` when ``u < 1``, so
    that ``(2u - 1) D(p, q) = f(u) + 2(u - 1) f(1/2)`` and
    ``(2 - u) D(p, q) = f(u) + (1 - u) f(2)`` respectively.
    """
    if not u > 0 or u == 1:
        raise CatalogError(f"two-point construction needs u > 0 and u != 1, got {u!r}")
    if u > 1:
        den = 2.0 * u - 1.0
        p = (u / den, (u - 1.0) / den)
        q = (1.0 / den, 2.0 * (u - 1.0) / den)
    else:
        den = 2.0 - u
        p = (u / den, 2.0 * (1.0 - u) / den)
        q = (1.0 / den, (1.0 - u) / den)
    return DiscreteDistribution(p), DiscreteDistribution(q)
