"""Test distributions, parametric families and seeded random streams.

Two concrete kinds are supported: finite discrete distributions over the
indices ``0..n-1`` and one-dimensional Gaussian mixtures.  Parametric
families map a parameter vector ``lam`` to one of those and expose the
derivatives needed by the Fisher matrix and by generator gradients.

Random streams
--------------
All randomness comes from :func:`rng_stream`, which builds a PCG64
generator from ``SeedSequence([seed, crc32(purpose)])``.  Each consumer
asks for its own named purpose (``"critic/p"``, ``"generator/latent"``,
...), so adding draws to one stream never shifts another and runs are
bit-reproducible across platforms.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.special import expit, log_softmax, logsumexp, softmax

__all__ = [
    "DiscreteDistribution",
    "DistributionError",
    "GaussianFamily",
    "GaussianMeanFamily",
    "GaussianMixture1D",
    "IntegrationError",
    "NoisyAffineGenerator",
    "SoftmaxFamily",
    "family_from_descriptor",
    "fisher_matrix",
    "from_descriptor",
    "integration_bounds",
    "mix",
    "quad",
    "rng_stream",
    "to_descriptor",
]

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 400


class DistributionError(ValueError):
    """Invalid distribution parameters or descriptor."""


class IntegrationError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


def rng_stream(seed: int, purpose: str = "") -> np.random.Generator:
    """Independent generator for ``(seed, purpose)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(purpose.encode())])
    return np.random.Generator(np.random.PCG64(ss))


def _as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng_stream(0 if rng is None else rng, "sample")


class DiscreteDistribution:
    """Probabilities over the support ``0..n-1``.

    With ``measure=True`` the entries only need to be nonnegative; this is
    how unnormalised positive measures (generalised KL) and distributions
    with zero cells are represented.
    """

    kind = "discrete"

    def __init__(self, probs: Sequence[float], measure: bool = False):
        probs = np.array(probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise DistributionError("discrete distribution needs at least two support points")
        if not np.all(np.isfinite(probs)):
            raise DistributionError("probabilities must be finite")
        if measure:
            if np.any(probs < 0):
                raise DistributionError("measure entries must be nonnegative")
        else:
            if np.any(probs <= 0):
                raise DistributionError(
                    "strictly positive probabilities required "
                    "(construct with measure=True to allow zeros)"
                )
            if abs(probs.sum() - 1.0) > 1e-12:
                raise DistributionError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        self.probs = probs
        self.measure = measure

    @property
    def n(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.n)

    def density(self, x):
        return self.probs[np.asarray(x, dtype=int)]

    def log_density(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.density(x))

    def sample(self, count: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
        if count < 1:
            raise DistributionError("sample count must be at least 1")
        p = self.probs / self.probs.sum()
        return _as_rng(rng).choice(self.n, size=count, p=p)

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DiscreteDistribution)
            and self.measure == other.measure
            and np.array_equal(self.probs, other.probs)
        )

    def __repr__(self) -> str:
        return f"DiscreteDistribution({self.probs.tolist()!r})"


class GaussianMixture1D:
    """Finite mixture of univariate normals; zero-weight components are pruned."""

    kind = "continuous"

    def __init__(self, weights: Sequence[float], means: Sequence[float], stddevs: Sequence[float]):
        weights = np.array(weights, dtype=float)
        means = np.array(means, dtype=float)
        stddevs = np.array(stddevs, dtype=float)
        if not (weights.shape == means.shape == stddevs.shape and weights.ndim == 1):
            raise DistributionError("weights, means and stddevs must be equal-length vectors")
        if weights.size == 0:
            raise DistributionError("mixture needs at least one component")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DistributionError("mixture weights must lie on the simplex")
        if np.any(stddevs <= 0) or not np.all(np.isfinite(means)):
            raise DistributionError("stddevs must be positive and means finite")
        keep = weights > 0
        self.weights = weights[keep]
        self.means = means[keep]
        self.stddevs = stddevs[keep]
        self._log_weights = np.log(self.weights)
        for arr in (self.weights, self.means, self.stddevs):
            arr.setflags(write=False)

    @classmethod
    def normal(cls, mean: float = 0.0, stddev: float = 1.0) -> "GaussianMixture1D":
        return cls([1.0], [mean], [stddev])

    def _component_logpdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        z = (x - self.means) / self.stddevs
        return -0.5 * z**2 - np.log(self.stddevs) - 0.5 * math.log(2 * math.pi)

    def log_density(self, x):
        c = self._component_logpdf(x) + self._log_weights
        m = np.max(c, axis=-1, keepdims=True)
        return (m + np.log(np.sum(np.exp(c - m), axis=-1, keepdims=True)))[..., 0]

    def density(self, x):
        return np.exp(self.log_density(x))

    def grad_log_density(self, x):
        """Derivative of ``log p(x)`` with respect to ``x``."""
        x = np.asarray(x, dtype=float)
        logc = self._component_logpdf(x) + self._log_weights
        resp = np.exp(logc - logsumexp(logc, axis=-1, keepdims=True))
        return np.sum(resp * (self.means - x[..., None]) / self.stddevs**2, axis=-1)

    def sample(self, count: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
        if count < 1:
            raise DistributionError("sample count must be at least 1")
        rng = _as_rng(rng)
        comp = rng.choice(self.weights.size, size=count, p=self.weights)
        return self.means[comp] + self.stddevs[comp] * rng.standard_normal(count)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot(self.weights, self.stddevs**2 + (self.means - m) ** 2))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GaussianMixture1D)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.stddevs, other.stddevs)
        )

    def __repr__(self) -> str:
        return (
            f"GaussianMixture1D(weights={self.weights.tolist()}, "
            f"means={self.means.tolist()}, stddevs={self.stddevs.tolist()})"
        )


Distribution = DiscreteDistribution | GaussianMixture1D


def mix(p: Distribution, q: Distribution, w: float) -> Distribution:
    """Pointwise mixture ``w p + (1 - w) q``."""
    if not 0.0 <= w <= 1.0:
        raise DistributionError(f"mixing weight must lie in [0, 1], got {w!r}")
    if isinstance(p, DiscreteDistribution) and isinstance(q, DiscreteDistribution):
        if p.n != q.n:
            raise DistributionError("discrete distributions have different support sizes")
        probs = w * p.probs + (1.0 - w) * q.probs
        measure = p.measure or q.measure
        if not measure and abs(probs.sum() - 1.0) > 1e-12:
            probs = probs / probs.sum()
        return DiscreteDistribution(probs, measure=measure or np.any(probs == 0))
    if isinstance(p, GaussianMixture1D) and isinstance(q, GaussianMixture1D):
        weights = np.concatenate([w * p.weights, (1.0 - w) * q.weights])
        return GaussianMixture1D(
            weights / weights.sum(),
            np.concatenate([p.means, q.means]),
            np.concatenate([p.stddevs, q.stddevs]),
        )
    raise DistributionError("cannot mix distributions of different kinds")


def integration_bounds(*dists: GaussianMixture1D) -> tuple[float, float]:
    lo = min(float(np.min(d.means - 10.0 * d.stddevs)) for d in dists)
    hi = max(float(np.max(d.means + 10.0 * d.stddevs)) for d in dists)
    return lo, hi


def quad(fn, lo: float, hi: float, points: Sequence[float] = (), what: str = "integral") -> float:
    """Adaptive Gauss-Kronrod integral of a scalar function over ``[lo, hi]``.

    Interior ``points`` (e.g. component means) become panel breakpoints.
    """
    pts = sorted({float(x) for x in points if lo < x < hi})
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err, info = integrate.quad(
            fn, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, full_output=1
        )[:3]
        if not np.isfinite(val):
            return float(val)
        if err > max(1e3 * QUAD_EPSABS, 1e-6 * abs(val)):
            raise IntegrationError(
                f"{what}: quadrature on [{a:.6g}, {b:.6g}] did not converge "
                f"(estimate {val!r}, error {err!r}, evaluations {info['neval']})"
            )
        total += val
    return total


def _breakpoints(*dists: GaussianMixture1D) -> list[float]:
    return sorted({float(m) for d in dists for m in d.means})


# -- descriptors --------------------------------------------------------------


def from_descriptor(desc: Mapping[str, Any]) -> Distribution:
    """Build a distribution from its JSON descriptor."""
    if not isinstance(desc, Mapping):
        raise DistributionError("distribution descriptor must be a JSON object")
    kind = desc.get("type")
    if kind == "discrete":
        if "probs" not in desc:
            raise DistributionError("discrete descriptor needs 'probs'")
        return DiscreteDistribution(desc["probs"], measure=bool(desc.get("measure", False)))
    if kind == "gmm1d":
        try:
            return GaussianMixture1D(desc["weights"], desc["means"], desc["stddevs"])
        except KeyError as exc:
            raise DistributionError(f"gmm1d descriptor missing {exc.args[0]!r}") from None
    if kind == "normal":
        return GaussianMixture1D.normal(desc.get("mean", 0.0), desc.get("stddev", 1.0))
    raise DistributionError(f"unknown distribution type {kind!r}")


def to_descriptor(dist: Distribution) -> dict:
    if isinstance(dist, DiscreteDistribution):
        out = {"type": "discrete", "probs": dist.probs.tolist()}
        if dist.measure:
            out["measure"] = True
        return out
    return {
        "type": "gmm1d",
        "weights": dist.weights.tolist(),
        "means": dist.means.tolist(),
        "stddevs": dist.stddevs.tolist(),
    }


# -- parametric families ------------------------------------------------------


class ParametricFamily:
    """Base class for ``lam -> q_lam``.

    Subclasses implement ``log_density`` and ``grad_log_density``;
    reparameterisable families also implement ``sample_latent``,
    ``transform`` and ``transform_jacobian``.
    """

    kind = "continuous"
    reparameterizable = False
    dim = 1

    def num_params(self) -> int:
        raise NotImplementedError

    def distribution(self, lam) -> Distribution:
        raise NotImplementedError

    def log_density(self, lam, x):
        raise NotImplementedError

    def grad_log_density(self, lam, x):
        """Shape ``(len(x), num_params)``."""
        raise NotImplementedError

    def density(self, lam, x):
        return np.exp(self.log_density(lam, x))

    def grad_density(self, lam, x):
        return self.density(lam, x)[..., None] * self.grad_log_density(lam, x)

    def sample(self, lam, count: int, rng) -> np.ndarray:
        return self.transform(lam, self.sample_latent(count, rng))

    def sample_latent(self, count: int, rng):
        raise NotImplementedError(f"{type(self).__name__} is not reparameterizable")

    def transform(self, lam, z):
        raise NotImplementedError(f"{type(self).__name__} is not reparameterizable")

    def transform_jacobian(self, lam, z):
        """``dx/dlam`` with shape ``(n, dim, num_params)``."""
        raise NotImplementedError(f"{type(self).__name__} is not reparameterizable")

    def descriptor(self) -> dict:
        raise NotImplementedError


class GaussianFamily(ParametricFamily):
    """``N(mu, sigma^2)`` with ``lam = (mu, sigma)``; sampled as ``mu + sigma z``."""

    reparameterizable = True

    def num_params(self) -> int:
        return 2

    @staticmethod
    def _unpack(lam):
        mu, sigma = np.asarray(lam, dtype=float)
        if not sigma > 0:
            raise DistributionError(f"stddev parameter must be positive, got {sigma!r}")
        return mu, sigma

    def distribution(self, lam) -> GaussianMixture1D:
        mu, sigma = self._unpack(lam)
        return GaussianMixture1D.normal(mu, sigma)

    def log_density(self, lam, x):
        mu, sigma = self._unpack(lam)
        z = (np.asarray(x, dtype=float) - mu) / sigma
        return -0.5 * z**2 - np.log(sigma) - 0.5 * math.log(2 * math.pi)

    def grad_log_density(self, lam, x):
        mu, sigma = self._unpack(lam)
        z = (np.asarray(x, dtype=float) - mu) / sigma
        return np.stack([z / sigma, (z**2 - 1.0) / sigma], axis=-1)

    def sample_latent(self, count, rng):
        return _as_rng(rng).standard_normal(count)

    def transform(self, lam, z):
        mu, sigma = np.asarray(lam, dtype=float)
        return mu + sigma * np.asarray(z)

    def transform_jacobian(self, lam, z):
        z = np.asarray(z, dtype=float)
        return np.stack([np.ones_like(z), z], axis=-1)[:, None, :]

    def descriptor(self) -> dict:
        return {"type": "gaussian"}


@dataclass
class GaussianMeanFamily(ParametricFamily):
    """``N(mu, stddev^2)`` with fixed ``stddev`` and ``lam = (mu,)``."""

    stddev: float = 1.0
    reparameterizable = True

    def num_params(self) -> int:
        return 1

    def distribution(self, lam) -> GaussianMixture1D:
        return GaussianMixture1D.normal(float(np.asarray(lam).reshape(-1)[0]), self.stddev)

    def log_density(self, lam, x):
        mu = float(np.asarray(lam).reshape(-1)[0])
        z = (np.asarray(x, dtype=float) - mu) / self.stddev
        return -0.5 * z**2 - math.log(self.stddev) - 0.5 * math.log(2 * math.pi)

    def grad_log_density(self, lam, x):
        mu = float(np.asarray(lam).reshape(-1)[0])
        return ((np.asarray(x, dtype=float) - mu) / self.stddev**2)[..., None]

    def sample_latent(self, count, rng):
        return _as_rng(rng).standard_normal(count)

    def transform(self, lam, z):
        return float(np.asarray(lam).reshape(-1)[0]) + self.stddev * np.asarray(z)

    def transform_jacobian(self, lam, z):
        return np.ones((np.asarray(z).shape[0], 1, 1))

    def descriptor(self) -> dict:
        return {"type": "gaussian_mean", "stddev": self.stddev}


@dataclass
class SoftmaxFamily(ParametricFamily):
    """Discrete distributions on ``n`` points with ``q = softmax(lam)``.

    Not reparameterisable; generator gradients use the score function.
    """

    n: int = 2
    kind = "discrete"

    def num_params(self) -> int:
        return self.n

    def probs(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.n,):
            raise DistributionError(f"expected {self.n} logits, got shape {lam.shape}")
        return softmax(lam)

    def distribution(self, lam) -> DiscreteDistribution:
        probs = self.probs(lam)
        return DiscreteDistribution(probs / probs.sum())

    def log_density(self, lam, x):
        return log_softmax(np.asarray(lam, dtype=float))[np.asarray(x, dtype=int)]

    def grad_log_density(self, lam, x):
        x = np.asarray(x, dtype=int)
        onehot = np.eye(self.n)[x]
        return onehot - self.probs(lam)

    def sample(self, lam, count, rng):
        return _as_rng(rng).choice(self.n, size=count, p=self.distribution(lam).probs)

    def descriptor(self) -> dict:
        return {"type": "softmax", "n": self.n}


def _softplus(x):
    return np.logaddexp(0.0, x)


def _inv_softplus(y: float) -> float:
    return float(y + np.log(-np.expm1(-y)))


@dataclass
class NoisyAffineGenerator(ParametricFamily):
    """Affine push-forward of standard normal latents with output noise.

    ``x = A z + c + s * eps`` with ``z ~ N(0, I_latent)`` and
    ``eps ~ N(0, I_dim)``.  Parameters are ``vec(A)`` (row major), ``c`` and,
    when ``noise == "learned"``, a raw scalar ``rho`` with
    ``s = softplus(rho)``.  With ``noise == "fixed"`` the stddev is
    ``noise_stddev``; ``"none"`` drops the noise and the density is only
    defined when ``A A^T`` is nonsingular.
    """

    dim: int = 1
    latent_dim: int = 1
    noise: str = "learned"
    noise_stddev: float = 0.1
    reparameterizable = True

    def __post_init__(self):
        if self.noise not in ("learned", "fixed", "none"):
            raise DistributionError(f"unknown output-noise mode {self.noise!r}")
        if self.noise == "fixed" and not self.noise_stddev > 0:
            raise DistributionError("fixed output-noise stddev must be positive")

    def num_params(self) -> int:
        return self.dim * self.latent_dim + self.dim + (self.noise == "learned")

    def initial_params(self, scale: float = 1.0, offset=0.0) -> np.ndarray:
        A = scale * np.eye(self.dim, self.latent_dim)
        c = np.broadcast_to(np.asarray(offset, dtype=float), (self.dim,))
        parts = [A.ravel(), c]
        if self.noise == "learned":
            parts.append([_inv_softplus(self.noise_stddev)])
        return np.concatenate(parts)

    def unpack(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.num_params(),):
            raise DistributionError(f"expected {self.num_params()} parameters, got {lam.shape}")
        k = self.dim * self.latent_dim
        A = lam[:k].reshape(self.dim, self.latent_dim)
        c = lam[k : k + self.dim]
        if self.noise == "learned":
            s = float(_softplus(lam[-1]))
        elif self.noise == "fixed":
            s = self.noise_stddev
        else:
            s = 0.0
        return A, c, s

    def noise_level(self, lam) -> float:
        return self.unpack(lam)[2]

    def covariance(self, lam) -> np.ndarray:
        A, _, s = self.unpack(lam)
        return A @ A.T + s**2 * np.eye(self.dim)

    def distribution(self, lam) -> GaussianMixture1D:
        if self.dim != 1:
            raise DistributionError("exact evaluation is only available for 1-D generators")
        _, c, _ = self.unpack(lam)
        return GaussianMixture1D.normal(float(c[0]), float(np.sqrt(self.covariance(lam)[0, 0])))

    def _as_points(self, x):
        x = np.asarray(x, dtype=float)
        return x.reshape(-1, self.dim) if self.dim > 1 or x.ndim == 0 else x.reshape(-1, 1)

    def log_density(self, lam, x):
        shape = np.shape(x) if self.dim == 1 else np.shape(x)[:-1]
        _, c, _ = self.unpack(lam)
        cov = self.covariance(lam)
        pts = self._as_points(x) - c
        sign, logdet = np.linalg.slogdet(cov)
        with np.errstate(divide="ignore", invalid="ignore"):
            if sign <= 0:
                out = np.full(pts.shape[0], -np.inf)
            else:
                sol = np.linalg.solve(cov, pts.T).T
                out = -0.5 * np.sum(pts * sol, axis=1) - 0.5 * logdet - 0.5 * self.dim * math.log(2 * math.pi)
        return out.reshape(shape)

    def grad_log_density(self, lam, x):
        shape = np.shape(x) if self.dim == 1 else np.shape(x)[:-1]
        A, c, s = self.unpack(lam)
        cov = self.covariance(lam)
        cinv = np.linalg.inv(cov)
        r = self._as_points(x) - c
        alpha = r @ cinv  # Sigma^{-1} (x - c)
        # d log q / d Sigma = 0.5 (alpha alpha^T - Sigma^{-1})
        G = 0.5 * (alpha[:, :, None] * alpha[:, None, :] - cinv)
        grads = [(2.0 * G @ A).reshape(len(r), -1), alpha]
        if self.noise == "learned":
            # d Sigma / d rho = 2 s sigmoid(rho) I
            dsig = 2.0 * s * float(expit(np.asarray(lam)[-1]))
            grads.append((np.trace(G, axis1=1, axis2=2) * dsig)[:, None])
        out = np.concatenate(grads, axis=1)
        return out.reshape(*shape, -1)

    def sample_latent(self, count, rng):
        rng = _as_rng(rng)
        return rng.standard_normal((count, self.latent_dim + self.dim))

    def transform(self, lam, z):
        A, c, s = self.unpack(lam)
        z = np.asarray(z, dtype=float)
        x = z[:, : self.latent_dim] @ A.T + c + s * z[:, self.latent_dim :]
        return x[:, 0] if self.dim == 1 else x

    def transform_jacobian(self, lam, z):
        lam = np.asarray(lam, dtype=float)
        z = np.asarray(z, dtype=float)
        n = z.shape[0]
        zl, eps = z[:, : self.latent_dim], z[:, self.latent_dim :]
        jac = np.zeros((n, self.dim, self.num_params()))
        for i in range(self.dim):
            jac[:, i, i * self.latent_dim : (i + 1) * self.latent_dim] = zl
            jac[:, i, self.dim * self.latent_dim + i] = 1.0
        if self.noise == "learned":
            jac[:, :, -1] = eps * expit(lam[-1])
        return jac

    def descriptor(self) -> dict:
        return {
            "type": "noisy_affine",
            "dim": self.dim,
            "latent_dim": self.latent_dim,
            "noise": self.noise,
            "noise_stddev": self.noise_stddev,
        }


def family_from_descriptor(desc: Mapping[str, Any]) -> ParametricFamily:
    kind = desc.get("type")
    if kind == "gaussian":
        return GaussianFamily()
    if kind == "gaussian_mean":
        return GaussianMeanFamily(float(desc.get("stddev", 1.0)))
    if kind == "softmax":
        return SoftmaxFamily(int(desc["n"]))
    if kind == "noisy_affine":
        return NoisyAffineGenerator(
            dim=int(desc.get("dim", 1)),
            latent_dim=int(desc.get("latent_dim", 1)),
            noise=desc.get("noise", "learned"),
            noise_stddev=float(desc.get("noise_stddev", 0.1)),
        )
    raise DistributionError(f"unknown generator family {kind!r}")


def fisher_matrix(family: ParametricFamily, lam) -> np.ndarray:
    """Fisher information ``E_q[grad log q grad log q^T]`` at ``lam``.

    Summation over the support for discrete families, adaptive quadrature
    for one-dimensional continuous ones.
    """
    lam = np.asarray(lam, dtype=float)
    k = family.num_params()
    if family.kind == "discrete":
        dist = family.distribution(lam)
        x = dist.support
        g = family.grad_log_density(lam, x)
        return np.einsum("n,ni,nj->ij", dist.probs, g, g)
    if family.dim != 1:
        raise IntegrationError("Fisher matrix by quadrature needs a 1-D family")
    dist = family.distribution(lam)
    lo, hi = integration_bounds(dist)
    F = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):

            def integrand(x, i=i, j=j):
                g = family.grad_log_density(lam, np.array([x]))[0]
                return float(family.density(lam, np.array([x]))[0] * g[i] * g[j])

            F[i, j] = F[j, i] = quad(integrand, lo, hi, _breakpoints(dist), what=f"Fisher[{i},{j}]")
    return F
