"""Variational divergence estimation from samples.

The lower bound ``E_f(p, q, d) = E_p[a(d)] - E_q[b(d)]`` is estimated by
sample means and maximised over the parameters of a critic by stochastic
gradient ascent.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from fdivlab.catalog import DivergenceSpec, builtin
from fdivlab.critics import Critic
from fdivlab.distributions import rng_stream
from fdivlab.optim import make_optimizer

__all__ = [
    "CriticConfig",
    "EstimateReport",
    "EvaluationError",
    "TrainingError",
    "critic_param_gradient",
    "empirical_sampler",
    "load_samples",
    "mc_bound",
    "mc_bound_stats",
    "train_critic",
]

Sampler = Callable[[int, np.random.Generator], np.ndarray]


class EvaluationError(ArithmeticError):
    """``a`` or ``b`` produced a non-finite value."""

    def __init__(self, message: str, d: float):
        super().__init__(message)
        self.d = d


class TrainingError(ArithmeticError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


def _spec(spec):
    return builtin(spec) if isinstance(spec, str) else spec


def _terms(spec: DivergenceSpec, samples_p, samples_q, critic):
    if len(samples_p) == 0 or len(samples_q) == 0:
        raise ValueError("both sample sets must be nonempty")
    dp = np.asarray(critic(samples_p), dtype=float)
    dq = np.asarray(critic(samples_q), dtype=float)
    ap = np.asarray(spec.a(dp), dtype=float)
    bq = np.asarray(spec.b(dq), dtype=float)
    for vals, ds, label in ((ap, dp, "a"), (bq, dq, "b")):
        bad = ~np.isfinite(vals)
        if bad.any():
            d = float(ds[bad][0])
            raise EvaluationError(f"{spec.name}: {label}(d) is not finite at d = {d!r}", d)
    return dp, dq, ap, bq


def mc_bound(spec: DivergenceSpec | str, samples_p, samples_q, critic: Callable) -> float:
    """Sample estimate of ``E_f``: mean of ``a(d)`` over p minus mean of ``b(d)`` over q."""
    _, _, ap, bq = _terms(_spec(spec), samples_p, samples_q, critic)
    return float(ap.mean() - bq.mean())


def mc_bound_stats(spec: DivergenceSpec | str, samples_p, samples_q, critic: Callable) -> tuple[float, float]:
    """``(estimate, standard error)`` of the sample bound."""
    _, _, ap, bq = _terms(_spec(spec), samples_p, samples_q, critic)
    se = math.sqrt(ap.var(ddof=1) / ap.size + bq.var(ddof=1) / bq.size) if min(ap.size, bq.size) > 1 else math.inf
    return float(ap.mean() - bq.mean()), se


def critic_param_gradient(spec: DivergenceSpec | str, batch_p, batch_q, critic: Critic) -> np.ndarray:
    """Gradient of :func:`mc_bound` with respect to the critic parameters.

    Chain rule through ``a1`` and ``b1``::

        mean_p[a1(d) dd/dnu] - mean_q[b1(d) dd/dnu]
    """
    spec = _spec(spec)
    dp, dq, _, _ = _terms(spec, batch_p, batch_q, critic)
    wp = np.asarray(spec.a1(dp), dtype=float) / dp.size
    wq = np.asarray(spec.b1(dq), dtype=float) / dq.size
    return critic.vjp(batch_p, wp) - critic.vjp(batch_q, wq)


@dataclass
class CriticConfig:
    steps: int = 2000
    batch_size: int = 1024
    learning_rate: float = 0.05
    optimizer: str = "momentum"
    momentum: float = 0.9
    average_last: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.average_last < 1:
            raise ValueError("steps, batch_size and average_last must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class EstimateReport:
    divergence: str
    estimate: float
    standard_error: float
    critic_params: list[float]
    trace: list[dict] = field(default_factory=list)
    batch_size: int = 0
    steps: int = 0
    seed: int = 0
    samples_p: int | None = None
    samples_q: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def trace_rows(self):
        header = ("step", "e_f", "grad_norm")
        return header, [tuple(row[k] for k in header) for row in self.trace]


def train_critic(
    spec: DivergenceSpec | str,
    sampler_p: Sampler,
    sampler_q: Sampler,
    critic: Critic,
    config: CriticConfig | None = None,
) -> EstimateReport:
    """Maximise the sample bound over ``critic``'s parameters.

    Each step draws fresh batches from both samplers.  The reported
    estimate is the mean of the per-batch bound over the final
    ``average_last`` steps, with the standard error of that mean.
    """
    spec = _spec(spec)
    config = config or CriticConfig()
    rng_p = rng_stream(config.seed, "critic/p")
    rng_q = rng_stream(config.seed, "critic/q")
    opt = make_optimizer(config.optimizer, config.learning_rate, config.momentum)
    trace = []
    window = []
    for step in range(config.steps):
        bp = sampler_p(config.batch_size, rng_p)
        bq = sampler_q(config.batch_size, rng_q)
        value = mc_bound(spec, bp, bq, critic)
        grad = critic_param_gradient(spec, bp, bq, critic)
        params = opt.step(critic.params, -grad)
        if not np.all(np.isfinite(params)) or np.max(np.abs(params)) > 1e8:
            raise TrainingError(f"critic parameters diverged at step {step}", step)
        critic.set_params(params)
        trace.append({"step": step, "e_f": value, "grad_norm": float(np.linalg.norm(grad))})
        if step >= config.steps - config.average_last:
            window.append(value)
    window = np.asarray(window)
    se = float(window.std(ddof=1) / math.sqrt(window.size)) if window.size > 1 else math.inf
    return EstimateReport(
        divergence=spec.name,
        estimate=float(window.mean()),
        standard_error=se,
        critic_params=critic.params.tolist(),
        trace=trace,
        batch_size=config.batch_size,
        steps=config.steps,
        seed=config.seed,
    )


def load_samples(path: str | Path) -> np.ndarray:
    """Read one sample per line (whitespace-separated coordinates)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a numeric record: {line!r}") from None
    if not rows:
        raise ValueError(f"{path}: no samples")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ValueError(f"{path}: records have inconsistent dimensions {sorted(width)}")
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0] if arr.shape[1] == 1 else arr


def empirical_sampler(samples: np.ndarray) -> Sampler:
    """Resample a fixed data set with replacement."""
    samples = np.asarray(samples)

    def sample(count, rng):
        return samples[rng.integers(0, len(samples), size=count)]

    return sample
