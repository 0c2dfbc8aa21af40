"""Identity suite: every structural property of the catalog and engines.

Each check measures a worst-case gap and compares it with a fixed
tolerance.  Checks are grouped (``normalization``, ``taylor``, ...) so a
subset can be run with ``groups=``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from fdivlab.catalog import BUILTIN_NAMES, DivergenceSpec, builtin, combine, reverse, two_point_construction
from fdivlab.distributions import (
    DiscreteDistribution,
    GaussianMeanFamily,
    GaussianMixture1D,
    SoftmaxFamily,
    mix,
    rng_stream,
)
from fdivlab.exact import (
    bound_value,
    central_difference,
    divergence,
    exact_generator_gradient,
    optimal_critic,
    parametric_taylor,
    taylor_gap,
)

__all__ = [
    "GROUPS",
    "CheckResult",
    "SuiteReport",
    "convergence_order",
    "random_discrete_pairs",
    "run_suite",
    "GMM_PAIRS",
    "TAYLOR_EPS",
]

U_GRID = (0.1, 0.5, 1.0, 2.0, 10.0)
D_GRID = (-3.0, -1.0, 0.0, 1.0, 3.0)
TAYLOR_EPS = (0.02, 0.01, 0.005)
TAYLOR_Q = (0.2, 0.3, 0.5)
TAYLOR_V = (1.0, -1.5, 0.5)

# Tail widths are within a factor sqrt(2) of each other so that every
# builtin divergence (Pearson and Neymann included) is finite.
GMM_PAIRS = (
    (GaussianMixture1D([0.5, 0.5], [-1.0, 1.0], [0.8, 0.8]), GaussianMixture1D.normal(0.0, 1.0)),
    (GaussianMixture1D([0.3, 0.7], [0.0, 2.0], [1.0, 0.8]), GaussianMixture1D([0.6, 0.4], [0.5, 1.5], [0.9, 1.0])),
    (GaussianMixture1D.normal(1.0, 1.0), GaussianMixture1D([0.5, 0.5], [-0.5, 0.5], [1.0, 1.2])),
)


@dataclass
class CheckResult:
    name: str
    group: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


@dataclass
class SuiteReport:
    checks: list[CheckResult] = field(default_factory=list)
    perturb: str | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "perturb": self.perturb,
            "checks": [asdict(c) for c in self.checks],
        }


def random_discrete_pairs(count: int, n: int = 4, seed: int = 0):
    """Random strictly positive discrete pairs, reproducible from ``seed``."""
    rng = rng_stream(seed, "verify/pairs")
    pairs = []
    for _ in range(count):
        p = rng.dirichlet(np.ones(n)) + 0.01
        q = rng.dirichlet(np.ones(n)) + 0.01
        pairs.append((DiscreteDistribution(p / p.sum()), DiscreteDistribution(q / q.sum())))
    return pairs


def convergence_order(eps: Iterable[float], gaps: Iterable[float], scale: Iterable[float] | None = None) -> float:
    """Least-squares slope of ``log gap`` against ``log eps``.

    When every gap is at rounding level relative to ``scale`` (the size of
    the quantities being compared) the remainder vanishes identically and
    the order is reported as ``inf``.
    """
    eps, gaps = np.asarray(list(eps), float), np.abs(np.asarray(list(gaps), float))
    if scale is not None and np.all(gaps <= 1e-12 * np.abs(np.asarray(list(scale), float))):
        return math.inf
    return float(np.polyfit(np.log(eps), np.log(gaps), 1)[0])


def _rel(a, b, floor=1.0):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


# -- individual groups --------------------------------------------------------


def _normalization(specs):
    for s in specs.values():
        gap = max(abs(s.f(1.0)), abs(s.f1(1.0)))
        yield CheckResult(f"normalization[{s.name}]", "normalization", gap < 1e-12, gap, 1e-12)
        gap = abs(s.f2(1.0) - 1.0)
        yield CheckResult(f"canonical[{s.name}]", "normalization", gap < 1e-12, gap, 1e-12)


def _convexity(specs):
    u = np.logspace(-6, 6, 121)
    for s in specs.values():
        lowest = float(np.min(s.f2(u)))
        yield CheckResult(f"convexity[{s.name}]", "convexity", lowest > 0, lowest, 0.0, "min f'' on [1e-6, 1e6]")
        f = s.f(u)
        off = u != 1.0
        ok = bool(np.all(f[off] > 0)) and abs(s.f(1.0)) < 1e-12
        yield CheckResult(f"f_nonnegative[{s.name}]", "convexity", ok, float(np.min(f)), 0.0)


def _derivatives(specs):
    u = np.array(U_GRID)
    h = 1e-5 * u
    for s in specs.values():
        fd1 = (s.f(u + h) - s.f(u - h)) / (2 * h)
        fd2 = (s.f1(u + h) - s.f1(u - h)) / (2 * h)
        gap = max(_rel(fd1, s.f1(u)), _rel(fd2, s.f2(u)))
        yield CheckResult(f"derivatives[{s.name}]", "derivatives", gap < 1e-6, gap, 1e-6)
        d = np.array(D_GRID)
        hd = 1e-5
        fda = (s.a(d + hd) - s.a(d - hd)) / (2 * hd)
        fdb = (s.b(d + hd) - s.b(d - hd)) / (2 * hd)
        gap = max(_rel(fda, s.a1(d)), _rel(fdb, s.b1(d)))
        yield CheckResult(f"ab_derivatives[{s.name}]", "derivatives", gap < 1e-6, gap, 1e-6)


def _ab_identities(specs):
    d = np.array(D_GRID)
    u = np.exp(d)
    for s in specs.values():
        gap = max(
            float(np.max(np.abs(s.a(d) - s.f1(u)))),
            float(np.max(np.abs(s.b(d) - (u * s.f1(u) - s.f(u))))),
            float(np.max(np.abs(s.b1(d) - s.a1(d) * u))),
        )
        yield CheckResult(f"ab_identities[{s.name}]", "ab_identities", gap < 1e-12, gap, 1e-12)


def _mean_relations(specs):
    u = np.array(U_GRID)
    kl, rkl = specs["kl"].f2(u), specs["reverse_kl"].f2(u)
    targets = {
        "jensen_shannon": 2.0 / (1.0 / kl + 1.0 / rkl),
        "squared_hellinger": np.sqrt(kl * rkl),
        "jeffreys": 0.5 * (kl + rkl),
    }
    labels = {"jensen_shannon": "harmonic", "squared_hellinger": "geometric", "jeffreys": "arithmetic"}
    for name, target in targets.items():
        gap = float(np.max(np.abs(specs[name].f2(u) - target)))
        yield CheckResult(f"mean_relation[{name}]", "mean_relations", gap < 1e-12, gap, 1e-12, f"{labels[name]} mean of KL and reverse KL")


def _reversal(specs):
    u = np.array(U_GRID)
    d = np.array(D_GRID)
    for s in specs.values():
        rr = reverse(reverse(s))
        gap = max(
            _rel(rr.f(u), s.f(u)),
            _rel(rr.f1(u), s.f1(u)),
            _rel(rr.f2(u), s.f2(u)),
            _rel(rr.a(d), s.a(d)),
            _rel(rr.b(d), s.b(d)),
        )
        yield CheckResult(f"reversal_involution[{s.name}]", "reversal", gap < 1e-12, gap, 1e-12)
    pairs = [("kl", "reverse_kl"), ("pearson_chi2", "neymann")]
    for a, b in pairs:
        r = reverse(specs[a])
        gap = max(_rel(r.f2(u), specs[b].f2(u)), _rel(r.a(d), specs[b].a(d)), _rel(r.b(d), specs[b].b(d)))
        yield CheckResult(f"reverse[{a}]={b}", "reversal", gap < 1e-12, gap, 1e-12)


def _divergence_properties(specs, seed):
    pairs = random_discrete_pairs(100, seed=seed)
    for s in specs.values():
        lowest = min(divergence(s, p, q) for p, q in pairs)
        yield CheckResult(f"nonnegative[{s.name}]", "divergence", lowest >= -1e-10, lowest, -1e-10)
        same = max(divergence(s, p, p) for p, _ in pairs[:20])
        yield CheckResult(f"indiscernibles[{s.name}]", "divergence", same < 1e-10, same, 1e-10)
    for (na, nb) in (("kl", "reverse_kl"), ("pearson_chi2", "le_cam"), ("jensen_shannon", "squared_hellinger")):
        c = combine(0.3, specs[na], 1.7, specs[nb])
        gap = max(
            abs(divergence(c, p, q) - (0.3 * divergence(specs[na], p, q) + 1.7 * divergence(specs[nb], p, q)))
            for p, q in pairs[:20]
        )
        yield CheckResult(f"linearity[{na}+{nb}]", "divergence", gap < 1e-10, gap, 1e-10)
    # generalised KL stays nonnegative on unnormalised positive measures
    rng = rng_stream(seed, "verify/measures")
    worst = min(
        divergence(specs["kl"], DiscreteDistribution(rng.uniform(0.1, 3, 4), measure=True),
                   DiscreteDistribution(rng.uniform(0.1, 3, 4), measure=True))
        for _ in range(20)
    )
    yield CheckResult("generalized_kl_nonnegative", "divergence", worst >= 0, worst, 0.0)


def _softening(specs, seed):
    pairs = random_discrete_pairs(20, seed=seed)
    cases = (
        ("q-softened pearson_chi2 = le_cam", lambda p, q: 4 * divergence(specs["pearson_chi2"], p, mix(p, q, 0.5)), "le_cam"),
        ("p-softened neymann = le_cam", lambda p, q: 4 * divergence(specs["neymann"], mix(p, q, 0.5), q), "le_cam"),
        ("q-softened reverse_kl = softened_reverse_kl", lambda p, q: 4 * divergence(specs["reverse_kl"], p, mix(p, q, 0.5)), "softened_reverse_kl"),
    )
    for label, lhs, target in cases:
        gap = max(abs(lhs(p, q) - divergence(specs[target], p, q)) for p, q in pairs)
        yield CheckResult(label, "softening", gap < 1e-9, gap, 1e-9)


def _random_critic(rng, base: Callable, continuous: bool) -> Callable:
    c0, c1, c2 = rng.normal(0, 0.5, 3)
    if continuous:
        return lambda x: base(x) + c0 + c1 * np.sin(np.asarray(x, float)) + c2 * np.tanh(np.asarray(x, float))
    noise = rng.normal(0, 1.0, 64)
    return lambda x: base(x) + noise[np.asarray(x, dtype=int)]


def _tightness(specs, seed, continuous=True, critics=50):
    pairs = random_discrete_pairs(20, seed=seed)
    rng = rng_stream(seed, "verify/critics")
    for s in specs.values():
        gap = max(abs(bound_value(s, p, q, optimal_critic(p, q)) - divergence(s, p, q)) for p, q in pairs)
        yield CheckResult(f"tightness_discrete[{s.name}]", "tightness", gap < 1e-9, gap, 1e-9)
        excess = -math.inf
        for p, q in pairs:
            dstar = optimal_critic(p, q)
            D = divergence(s, p, q)
            for _ in range(critics):
                excess = max(excess, bound_value(s, p, q, _random_critic(rng, dstar, False)) - D)
        yield CheckResult(f"lower_bound_discrete[{s.name}]", "tightness", excess <= 1e-9, excess, 1e-9)
    if not continuous:
        return
    for s in specs.values():
        gap = max(abs(bound_value(s, p, q, optimal_critic(p, q)) - divergence(s, p, q)) for p, q in GMM_PAIRS)
        yield CheckResult(f"tightness_quadrature[{s.name}]", "tightness", gap < 1e-7, gap, 1e-7)
    # random smooth critics on the mixtures; a few specs keep runtime bounded
    for name in ("kl", "jensen_shannon", "le_cam"):
        s = specs[name]
        excess = -math.inf
        for p, q in GMM_PAIRS:
            dstar = optimal_critic(p, q)
            D = divergence(s, p, q)
            for _ in range(critics // 10):
                excess = max(excess, bound_value(s, p, q, _random_critic(rng, dstar, True)) - D)
        yield CheckResult(f"lower_bound_quadrature[{name}]", "tightness", excess <= 1e-9, excess, 1e-9)


def _taylor(specs):
    q = DiscreteDistribution(TAYLOR_Q)
    for s in specs.values():
        gaps, sizes = [], []
        for eps in TAYLOR_EPS:
            lhs, rhs = taylor_gap(s, q, TAYLOR_V, eps)
            gaps.append(abs(lhs - rhs))
            sizes.append(rhs)
        order = convergence_order(TAYLOR_EPS, gaps, sizes)
        yield CheckResult(f"taylor_order[{s.name}]", "taylor", order >= 2.7, order, 2.7, "fitted order of |D - quadratic|")
    fam = GaussianMeanFamily(1.0)
    eps = 0.01
    worst = 0.0
    for s in specs.values():
        lhs, rhs = parametric_taylor(s, fam, [0.3], [1.0], eps)
        worst = max(worst, abs(rhs - 0.5 * eps**2))
    yield CheckResult("fisher_rhs_gaussian_mean", "taylor", worst < 1e-12, worst, 1e-12, "rhs vs closed-form KL eps^2/2")
    lhs, _ = parametric_taylor(specs["kl"], fam, [0.3], [1.0], eps)
    gap = abs(lhs - 0.5 * eps**2)
    yield CheckResult("gaussian_mean_kl_closed_form", "taylor", gap < 1e-12, gap, 1e-12)


def _gradient_matching(specs, seed):
    rng = rng_stream(seed, "verify/families")
    families = []
    for _ in range(3):
        fam = SoftmaxFamily(3)
        lam = rng.normal(0, 0.7, 3)
        p = DiscreteDistribution(rng.dirichlet(np.ones(3)) * 0.9 + 0.1 / 3)
        families.append((fam, lam, p))
    for s in specs.values():
        worst = 0.0
        for fam, lam, p in families:
            fd = central_difference(lambda l: divergence(s, p, fam.distribution(l)), lam)
            exact = exact_generator_gradient(s, p, fam, lam)
            worst = max(worst, float(np.max(np.abs(exact - fd)) / max(np.max(np.abs(fd)), 1e-12)))
        yield CheckResult(f"gradient_matching_discrete[{s.name}]", "gradient_matching", worst < 1e-4, worst, 1e-4)
    fam = GaussianMeanFamily(1.0)
    p = GaussianMixture1D.normal(0.0, 1.0)
    for s in specs.values():
        fd = central_difference(lambda l: divergence(s, p, fam.distribution(l)), [0.5])
        exact = exact_generator_gradient(s, p, fam, [0.5])
        gap = float(abs(exact[0] - fd[0]) / abs(fd[0]))
        yield CheckResult(f"gradient_matching_gaussian[{s.name}]", "gradient_matching", gap < 1e-4, gap, 1e-4)
    exact = exact_generator_gradient(specs["kl"], p, fam, [0.5])[0]
    gap = abs(exact - 0.5)
    yield CheckResult("gradient_matching_closed_form[kl]", "gradient_matching", gap < 1e-6, gap, 1e-6, "dD/dlam = lam at lam = 0.5")


def _two_point(specs):
    for s in specs.values():
        worst = 0.0
        for u in (1.5, 2.0, 5.0):
            p, q = two_point_construction(u)
            worst = max(worst, abs((2 * u - 1) * divergence(s, p, q) - (s.f(u) + 2 * (u - 1) * s.f(0.5))))
        for u in (0.2, 0.5):
            p, q = two_point_construction(u)
            worst = max(worst, abs((2 - u) * divergence(s, p, q) - (s.f(u) + (1 - u) * s.f(2.0))))
        yield CheckResult(f"two_point[{s.name}]", "two_point", worst < 1e-12, worst, 1e-12)


GROUPS: dict[str, Callable] = {
    "normalization": lambda specs, seed: _normalization(specs),
    "convexity": lambda specs, seed: _convexity(specs),
    "derivatives": lambda specs, seed: _derivatives(specs),
    "ab_identities": lambda specs, seed: _ab_identities(specs),
    "mean_relations": lambda specs, seed: _mean_relations(specs),
    "reversal": lambda specs, seed: _reversal(specs),
    "divergence": _divergence_properties,
    "softening": _softening,
    "tightness": _tightness,
    "taylor": lambda specs, seed: _taylor(specs),
    "gradient_matching": _gradient_matching,
    "two_point": lambda specs, seed: _two_point(specs),
}

PERTURBATIONS = ("catalog",)


def _perturbed_catalog(specs: dict[str, DivergenceSpec]) -> dict[str, DivergenceSpec]:
    """Fault injection: scale Jensen-Shannon's f'' by 1.01."""
    js = specs["jensen_shannon"]
    f2 = js.f2
    specs = dict(specs)
    specs["jensen_shannon"] = dataclasses.replace(js, f2=lambda u: 1.01 * np.asarray(f2(u)))
    return specs


def run_suite(groups: Iterable[str] | None = None, perturb: str | None = None, seed: int = 0) -> SuiteReport:
    selected = list(GROUPS) if not groups else list(groups)
    unknown = [g for g in selected if g not in GROUPS]
    if unknown:
        raise ValueError(f"unknown check group(s): {', '.join(unknown)}; known: {', '.join(GROUPS)}")
    if perturb is not None and perturb not in PERTURBATIONS:
        raise ValueError(f"unknown perturbation {perturb!r}")
    specs = {name: builtin(name) for name in BUILTIN_NAMES}
    if perturb == "catalog":
        specs = _perturbed_catalog(specs)
    report = SuiteReport(perturb=perturb)
    for group in selected:
        report.checks.extend(GROUPS[group](specs, seed))
    return report
