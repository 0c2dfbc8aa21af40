"""Adversarial divergence minimisation (f-GAN style) on toy generators.

The critic ascends ``E_h`` and the generator descends ``E_f``; ``h``
defaults to ``f`` and a different ``h`` gives hybrid ``(f, h)`` training.
Generator gradients are pathwise (reparameterised) for continuous
families and score-function for discrete ones.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from fdivlab.catalog import DivergenceSpec, builtin
from fdivlab.critics import Critic, critic_from_descriptor
from fdivlab.distributions import (
    Distribution,
    NoisyAffineGenerator,
    ParametricFamily,
    family_from_descriptor,
    from_descriptor,
    rng_stream,
)
from fdivlab.estimator import critic_param_gradient, mc_bound
from fdivlab.exact import central_difference, divergence, exact_generator_gradient
from fdivlab.optim import make_optimizer

__all__ = [
    "ABORT_THRESHOLD",
    "FixedPointReport",
    "TrainConfig",
    "TrainRun",
    "UnsupportedGenerator",
    "adversarial_train",
    "build_generator",
    "fixed_point_check",
    "generator_gradient",
    "gradient_matching_check",
    "score_generator_gradient",
]

ABORT_THRESHOLD = 1e8


class UnsupportedGenerator(TypeError):
    """The generator family has no reparameterised sampler."""


def _spec(spec):
    return builtin(spec) if isinstance(spec, str) else spec


def generator_gradient(spec: DivergenceSpec | str, latents, family: ParametricFamily, lam, critic) -> np.ndarray:
    """Pathwise estimate of ``dE_f/dlam`` on a fixed set of latents.

    With ``x = g_lam(z)`` only ``-mean_z b(d(x))`` depends on ``lam``, so the
    gradient is ``-mean_z b1(d(x)) (dd/dx) (dx/dlam)``.  This is the descent
    direction for the generator; at ``d = d*`` it equals ``dD_f/dlam``.
    Only ``spec.b1`` is consulted.
    """
    if not family.reparameterizable:
        raise UnsupportedGenerator(f"{type(family).__name__} has no reparameterised sampler")
    spec = _spec(spec)
    lam = np.asarray(lam, dtype=float)
    x = family.transform(lam, latents)
    d = np.asarray(critic(x), dtype=float)
    gx = np.asarray(critic.grad_x(x), dtype=float).reshape(len(d), -1)
    jac = family.transform_jacobian(lam, latents)
    per_sample = np.einsum("nk,nkp->np", gx, jac)
    return -np.mean(np.asarray(spec.b1(d))[:, None] * per_sample, axis=0)


def score_generator_gradient(spec: DivergenceSpec | str, samples, family: ParametricFamily, lam, critic) -> np.ndarray:
    """Score-function estimate ``-mean_x b(d(x)) dlog q_lam(x)/dlam`` for ``x ~ q_lam``."""
    spec = _spec(spec)
    d = np.asarray(critic(samples), dtype=float)
    score = family.grad_log_density(lam, samples)
    return -np.mean(np.asarray(spec.b(d))[:, None] * score, axis=0)


def gradient_matching_check(spec: DivergenceSpec | str, p: Distribution, family: ParametricFamily, lam):
    """Finite-difference ``dD_f/dlam`` against the bound's gradient at ``d*``.

    Returns ``(lhs, rhs, gap)`` with ``gap`` the max-norm difference.
    """
    spec = _spec(spec)
    lam = np.asarray(lam, dtype=float)
    lhs = central_difference(lambda l: divergence(spec, p, family.distribution(l)), lam)
    rhs = exact_generator_gradient(spec, p, family, lam)
    return lhs, rhs, float(np.max(np.abs(lhs - rhs)))


# -- configuration ------------------------------------------------------------


@dataclass
class TrainConfig:
    """Everything that determines an adversarial run.

    ``critic_divergence`` of ``None`` means the critic uses the generator's
    divergence.  ``mode`` is ``"alternating"`` (``critic_steps`` critic
    updates per generator update) or ``"simultaneous"``.
    """

    divergence: str = "jensen_shannon"
    critic_divergence: str | None = None
    target: dict = field(default_factory=lambda: {"type": "normal", "mean": 0.0, "stddev": 1.0})
    generator: dict = field(default_factory=lambda: {"type": "gaussian", "init": [3.0, 2.0]})
    critic: dict = field(default_factory=lambda: {"type": "mlp", "hidden": [32, 32]})
    critic_steps: int = 5
    generator_steps: int = 2000
    batch_size: int = 256
    critic_batch_size: int = 256
    generator_lr: float = 0.01
    critic_lr: float = 0.01
    generator_optimizer: str = "adam"
    critic_optimizer: str = "adam"
    momentum: float = 0.9
    mode: str = "alternating"
    output_noise: bool = True
    seed: int = 0

    def __post_init__(self):
        builtin(self.divergence)
        if self.critic_divergence is not None:
            builtin(self.critic_divergence)
        for name in ("critic_steps", "batch_size", "critic_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.generator_steps < 0:
            raise ValueError("generator_steps must be nonnegative")
        if not (self.generator_lr > 0 and self.critic_lr > 0):
            raise ValueError("learning rates must be positive")
        if self.mode not in ("alternating", "simultaneous"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def f(self) -> DivergenceSpec:
        return builtin(self.divergence)

    @property
    def h(self) -> DivergenceSpec:
        return builtin(self.critic_divergence or self.divergence)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


def build_generator(config: TrainConfig) -> tuple[ParametricFamily, np.ndarray]:
    desc = dict(config.generator)
    init = desc.pop("init", None)
    if desc.get("type") == "noisy_affine" and not config.output_noise:
        desc["noise"] = "none"
    family = family_from_descriptor(desc)
    if isinstance(family, NoisyAffineGenerator) and (init is None or isinstance(init, dict)):
        init = init or {}
        lam = family.initial_params(init.get("scale", 1.0), init.get("offset", 0.0))
    elif init is None:
        raise ValueError("generator descriptor needs 'init' parameters")
    else:
        lam = np.asarray(init, dtype=float)
    if lam.shape != (family.num_params(),):
        raise ValueError(f"generator init has {lam.size} values, family needs {family.num_params()}")
    return family, lam


def _build_critic(config: TrainConfig, family: ParametricFamily) -> Critic:
    desc = dict(config.critic)
    if desc.get("type") == "mlp":
        desc.setdefault("input_dim", family.dim)
    return critic_from_descriptor(desc, rng=rng_stream(config.seed, "critic/init"))


# -- training -----------------------------------------------------------------


@dataclass
class TrainRun:
    config: dict
    records: list[dict]
    final_params: list[float]
    seed: int
    aborted: bool = False
    failure: str | None = None
    wall_clock: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        out = asdict(self)
        if not include_timing:
            out.pop("wall_clock")
        return out

    def trace_rows(self):
        k = len(self.final_params)
        header = ("step", "e_f", "gen_grad_norm", "critic_grad_norm", *(f"lambda_{i}" for i in range(k)))
        rows = [
            (r["step"], r["e_f"], r["gen_grad_norm"], r["critic_grad_norm"], *r["params"])
            for r in self.records
        ]
        return header, rows


class _Sides:
    """Draws generator samples and gradients for either family kind."""

    def __init__(self, family: ParametricFamily):
        self.family = family

    def draw(self, lam, count, rng):
        if self.family.reparameterizable:
            z = self.family.sample_latent(count, rng)
            return z, self.family.transform(lam, z)
        x = self.family.sample(lam, count, rng)
        return x, x

    def gradient(self, spec, lam, draw, critic):
        z, x = draw
        if self.family.reparameterizable:
            return generator_gradient(spec, z, self.family, lam, critic)
        return score_generator_gradient(spec, x, self.family, lam, critic)


def _bad(params) -> bool:
    return not np.all(np.isfinite(params)) or float(np.max(np.abs(params), initial=0.0)) > ABORT_THRESHOLD


def adversarial_train(p_sampler: Callable | None, config: TrainConfig) -> TrainRun:
    """Run variational divergence minimisation.

    ``p_sampler(count, rng)`` draws data; ``None`` samples ``config.target``.
    Critic batches come from the ``critic/*`` streams and generator batches
    from ``generator/*``, so the generator never reuses a critic batch.
    """
    start = time.perf_counter()
    if p_sampler is None:
        p_sampler = from_descriptor(config.target).sample
    f, h = config.f, config.h
    family, lam = build_generator(config)
    critic = _build_critic(config, family)
    sides = _Sides(family)
    gen_opt = make_optimizer(config.generator_optimizer, config.generator_lr, config.momentum)
    critic_opt = make_optimizer(config.critic_optimizer, config.critic_lr, config.momentum)
    rng = {name: rng_stream(config.seed, name) for name in ("critic/p", "critic/q", "generator/p", "generator/latent")}

    def critic_grad():
        bp = p_sampler(config.critic_batch_size, rng["critic/p"])
        _, xq = sides.draw(lam, config.critic_batch_size, rng["critic/q"])
        return critic_param_gradient(h, bp, xq, critic)

    records: list[dict] = []
    failure = None
    critic_norm = 0.0
    for step in range(config.generator_steps):
        try:
            if config.mode == "alternating":
                for _ in range(config.critic_steps):
                    g = critic_grad()
                    critic.set_params(critic_opt.step(critic.params, -g))
                    critic_norm = float(np.linalg.norm(g))
                    if _bad(critic.params):
                        raise FloatingPointError(f"critic parameters diverged at generator step {step}")
                pending = None
            else:
                pending = critic_grad()
                critic_norm = float(np.linalg.norm(pending))
            draw = sides.draw(lam, config.batch_size, rng["generator/latent"])
            bp = p_sampler(config.batch_size, rng["generator/p"])
            e_f = mc_bound(f, bp, draw[1], critic)
            gg = sides.gradient(f, lam, draw, critic)
            lam = gen_opt.step(lam, gg)
            if pending is not None:
                critic.set_params(critic_opt.step(critic.params, -pending))
            if _bad(lam) or _bad(critic.params):
                raise FloatingPointError(f"parameters diverged at generator step {step}")
        except (FloatingPointError, ArithmeticError, ValueError) as exc:
            failure = str(exc)
            break
        records.append(
            {
                "step": step,
                "e_f": e_f,
                "gen_grad_norm": float(np.linalg.norm(gg)),
                "critic_grad_norm": critic_norm,
                "params": lam.tolist(),
            }
        )
    return TrainRun(
        config=config.to_dict(),
        records=records,
        final_params=np.asarray(lam, dtype=float).tolist(),
        seed=config.seed,
        aborted=failure is not None,
        failure=failure,
        wall_clock=time.perf_counter() - start,
    )


# -- equilibrium check --------------------------------------------------------


@dataclass
class FixedPointReport:
    generator_gradient: list[float]
    generator_se: list[float]
    critic_gradient: list[float]
    critic_se: list[float]
    generator_norm: float
    generator_noise: float
    critic_norm: float
    critic_noise: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_and_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def fixed_point_check(
    config: TrainConfig,
    p: Distribution | Callable,
    lam,
    critic_params,
    batches: int = 200,
    sigmas: float = 3.0,
) -> FixedPointReport:
    """Are both adversarial gradients zero up to Monte Carlo noise?

    Averages the generator gradient (``E_f``) and the critic gradient
    (``E_h``) over ``batches`` independent batches and passes when each
    mean has norm below ``sigmas`` times the norm of its standard error.
    """
    sampler = p.sample if hasattr(p, "sample") else p
    family, _ = build_generator(config)
    lam = np.asarray(lam, dtype=float)
    critic = _build_critic(config, family)
    critic.set_params(critic_params)
    sides = _Sides(family)
    rng_p = rng_stream(config.seed, "fixed-point/p")
    rng_q = rng_stream(config.seed, "fixed-point/q")
    gen, crit = [], []
    for _ in range(batches):
        bp = sampler(config.batch_size, rng_p)
        draw = sides.draw(lam, config.batch_size, rng_q)
        gen.append(sides.gradient(config.f, lam, draw, critic))
        crit.append(critic_param_gradient(config.h, bp, draw[1], critic))
    gm, gs = _mean_and_se(np.asarray(gen))
    cm, cs = _mean_and_se(np.asarray(crit))
    gn, gnoise = float(np.linalg.norm(gm)), float(np.linalg.norm(gs))
    cn, cnoise = float(np.linalg.norm(cm)), float(np.linalg.norm(cs))
    tiny = 1e-12
    passed = gn <= sigmas * gnoise + tiny and cn <= sigmas * cnoise + tiny
    return FixedPointReport(
        generator_gradient=gm.tolist(),
        generator_se=gs.tolist(),
        critic_gradient=cm.tolist(),
        critic_se=cs.tolist(),
        generator_norm=gn,
        generator_noise=gnoise,
        critic_norm=cn,
        critic_noise=cnoise,
        passed=passed,
    )
