import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdivlab.catalog import BUILTIN_NAMES, builtin
from fdivlab.critics import AffineFeatureCritic, MLPCritic, TabularCritic, critic_from_descriptor
from fdivlab.distributions import DiscreteDistribution, GaussianMixture1D, rng_stream
from fdivlab.estimator import (
    CriticConfig,
    EvaluationError,
    TrainingError,
    critic_param_gradient,
    empirical_sampler,
    load_samples,
    mc_bound,
    mc_bound_stats,
    train_critic,
)
from fdivlab.exact import divergence, optimal_critic

P = DiscreteDistribution([0.5, 0.5])
Q = DiscreteDistribution([0.25, 0.75])
KL_PQ = 0.14384103622589045


def _mlp(seed=0, input_dim=1):
    critic = MLPCritic(input_dim, (8, 8), rng=rng_stream(seed, "init"))
    critic.set_params(rng_stream(seed, "params").normal(scale=0.5, size=critic.params.size))
    return critic


def _fd_param_gradient(spec, bp, bq, critic, h=1e-6):
    base = critic.params.copy()
    out = np.empty(base.size)
    for i in range(base.size):
        e = np.zeros_like(base)
        e[i] = h
        critic.set_params(base + e)
        up = mc_bound(spec, bp, bq, critic)
        critic.set_params(base - e)
        down = mc_bound(spec, bp, bq, critic)
        out[i] = (up - down) / (2 * h)
    critic.set_params(base)
    return out


# -- Monte Carlo bound --------------------------------------------------------


def test_mc_bound_zero_critic_equal_samples():
    x = GaussianMixture1D.normal(0, 1).sample(1000, rng_stream(0, "x"))
    assert mc_bound("jensen_shannon", x, x, lambda t: np.zeros(len(t))) == pytest.approx(0.0, abs=1e-15)


def test_mc_bound_at_optimal_tabular_critic():
    rng = rng_stream(0, "mc")
    xp, xq = P.sample(10**6, rng), Q.sample(10**6, rng)
    critic = TabularCritic(2, optimal_critic(P, Q)(np.arange(2)))
    value, se = mc_bound_stats("kl", xp, xq, critic)
    assert abs(value - KL_PQ) < 0.003
    assert abs(value - KL_PQ) < 4 * se


def test_mc_bound_below_divergence_for_random_critics():
    rng = rng_stream(1, "critics")
    xp, xq = P.sample(20000, rng), Q.sample(20000, rng)
    for name in ("kl", "jensen_shannon", "pearson_chi2"):
        exact = divergence(name, P, Q)
        for _ in range(20):
            critic = TabularCritic(2, rng.normal(scale=1.0, size=2))
            value, se = mc_bound_stats(name, xp, xq, critic)
            assert value <= exact + 3 * se


def test_mc_bound_rejects_empty_and_non_finite():
    with pytest.raises(ValueError):
        mc_bound("kl", np.array([]), np.array([0]), TabularCritic(2))
    with pytest.raises(EvaluationError) as err:
        mc_bound("kl", np.array([0]), np.array([1]), TabularCritic(2, [0.0, 1000.0]))
    assert err.value.d == 1000.0


def test_estimator_consistency_improves_with_samples():
    critic = TabularCritic(2, optimal_critic(P, Q)(np.arange(2)))
    wins = 0
    for seed in range(10):
        rng = rng_stream(seed, "consistency")
        small = abs(mc_bound("kl", P.sample(10**4, rng), Q.sample(10**4, rng), critic) - KL_PQ)
        large = abs(mc_bound("kl", P.sample(10**6, rng), Q.sample(10**6, rng), critic) - KL_PQ)
        wins += large < small
    assert wins >= 9


# -- critic gradients ---------------------------------------------------------


def _critic_cases():
    rng = np.random.default_rng(5)
    xp_d, xq_d = rng.integers(0, 3, 40), rng.integers(0, 3, 30)
    xp_c, xq_c = rng.normal(1, 1, 40), rng.normal(0, 1, 30)
    return [
        ("tabular", TabularCritic(3, [0.3, -0.2, 0.8]), xp_d, xq_d),
        ("polynomial", AffineFeatureCritic.polynomial(3, [0.4, -0.1, 0.05, 0.2]), xp_c, xq_c),
        ("mlp", _mlp(), xp_c, xq_c),
    ]


@pytest.mark.parametrize("name", BUILTIN_NAMES)
@pytest.mark.parametrize("case", range(3))
def test_param_gradient_matches_finite_differences(name, case):
    _, critic, bp, bq = _critic_cases()[case]
    analytic = critic_param_gradient(name, bp, bq, critic)
    fd = _fd_param_gradient(builtin(name), bp, bq, critic)
    scale = max(np.max(np.abs(analytic)), 1e-8)
    assert np.max(np.abs(analytic - fd)) / scale < 1e-4


def test_single_sample_structure():
    critic = AffineFeatureCritic.polynomial(2, [0.3, -0.4, 0.1])
    s = builtin("jensen_shannon")
    x, y = np.array([0.7]), np.array([-1.2])
    expect = s.a1(critic(x)[0]) * np.array([0.7, 0.49, 1.0]) - s.b1(critic(y)[0]) * np.array([-1.2, 1.44, 1.0])
    np.testing.assert_allclose(critic_param_gradient(s, x, y, critic), expect, rtol=1e-14)


def test_tabular_kl_gradient_hand_formula():
    rng = np.random.default_rng(2)
    bp, bq = rng.integers(0, 3, 50), rng.integers(0, 3, 70)
    d = np.array([0.2, -0.7, 1.1])
    ph = np.bincount(bp, minlength=3) / bp.size
    qh = np.bincount(bq, minlength=3) / bq.size
    grad = critic_param_gradient("kl", bp, bq, TabularCritic(3, d))
    np.testing.assert_allclose(grad, ph - qh * np.exp(d), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_gradient_vanishes_at_optimal_critic(name):
    # batches whose empirical frequencies equal p and q exactly
    bp, bq = np.array([0, 1]), np.array([0, 1, 1, 1])
    critic = TabularCritic(2, optimal_critic(P, Q)(np.arange(2)))
    np.testing.assert_allclose(critic_param_gradient(name, bp, bq, critic), 0, atol=1e-14)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_chain_rule_uses_catalog_derivatives(name):
    s = builtin(name)
    _, critic, bp, bq = _critic_cases()[2]
    dq = critic(bq)
    via_a1 = critic.vjp(bp, s.a1(critic(bp)) / bp.size) - critic.vjp(bq, s.a1(dq) * np.exp(dq) / bq.size)
    np.testing.assert_allclose(critic_param_gradient(s, bp, bq, critic), via_a1, rtol=1e-12, atol=1e-13)


# -- critics ------------------------------------------------------------------


@pytest.mark.parametrize("case", range(3))
def test_param_jacobian_matches_finite_differences(case):
    _, critic, bp, _ = _critic_cases()[case]
    jac = critic.param_jacobian(bp[:5])
    base = critic.params.copy()
    h = 1e-6
    for i in range(base.size):
        e = np.zeros_like(base)
        e[i] = h
        critic.set_params(base + e)
        up = critic(bp[:5])
        critic.set_params(base - e)
        down = critic(bp[:5])
        critic.set_params(base)
        np.testing.assert_allclose(jac[:, i], (up - down) / (2 * h), rtol=1e-4, atol=1e-9)


@pytest.mark.parametrize("critic", [AffineFeatureCritic.polynomial(3, [0.4, -0.1, 0.05, 0.2]), _mlp(3)])
def test_input_gradient_matches_finite_differences(critic):
    x = np.linspace(-2, 2, 9)
    h = 1e-6
    np.testing.assert_allclose(critic.grad_x(x)[:, 0], (critic(x + h) - critic(x - h)) / (2 * h), rtol=1e-6, atol=1e-9)


def test_mlp_two_dimensional_input_gradient():
    critic = _mlp(4, input_dim=2)
    x = np.random.default_rng(0).normal(size=(6, 2))
    g = critic.grad_x(x)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        np.testing.assert_allclose(g[:, k], (critic(x + e) - critic(x - e)) / (2 * h), rtol=1e-6, atol=1e-9)


def test_mlp_starts_at_zero_and_is_seeded():
    a = MLPCritic(1, (32, 32), rng=rng_stream(0, "critic/init"))
    b = MLPCritic(1, (32, 32), rng=rng_stream(0, "critic/init"))
    np.testing.assert_array_equal(a.params, b.params)
    assert np.all(a(np.linspace(-3, 3, 5)) == 0)
    assert a.params.size == 32 + 32 + 32 * 32 + 32 + 32 + 1


def test_critic_descriptors():
    assert isinstance(critic_from_descriptor({"type": "tabular", "n": 4}), TabularCritic)
    poly = critic_from_descriptor({"type": "polynomial", "degree": 2, "params": [1, 2, 3]})
    assert poly(np.array([1.0]))[0] == 6.0
    with pytest.raises(ValueError):
        critic_from_descriptor({"type": "rbf"})


# -- training -----------------------------------------------------------------


def test_train_tabular_kl():
    cfg = CriticConfig(steps=300, batch_size=20000, learning_rate=0.1, seed=0)
    report = train_critic("kl", P.sample, Q.sample, TabularCritic(2), cfg)
    assert abs(report.estimate - KL_PQ) / KL_PQ < 0.02
    np.testing.assert_allclose(report.critic_params, [math.log(2), math.log(2 / 3)], atol=0.02)
    assert len(report.trace) == 300
    assert report.trace_rows()[0] == ("step", "e_f", "grad_norm")


def test_train_equal_distributions_estimates_zero():
    cfg = CriticConfig(steps=400, batch_size=4000, seed=1)
    report = train_critic("jensen_shannon", Q.sample, Q.sample, TabularCritic(2), cfg)
    assert abs(report.estimate) < 3 * report.standard_error


def test_train_affine_critic_gaussian_kl():
    p, q = GaussianMixture1D.normal(1, 1), GaussianMixture1D.normal(0, 1)
    cfg = CriticConfig(steps=600, batch_size=4096, learning_rate=0.05, seed=2)
    report = train_critic("kl", p.sample, q.sample, AffineFeatureCritic.polynomial(1), cfg)
    assert report.estimate == pytest.approx(0.5, rel=0.05)
    np.testing.assert_allclose(report.critic_params, [1.0, -0.5], atol=0.1)


def test_training_is_deterministic():
    cfg = CriticConfig(steps=50, batch_size=256, learning_rate=0.05, seed=7)
    a = train_critic("le_cam", P.sample, Q.sample, TabularCritic(2), cfg)
    b = train_critic("le_cam", P.sample, Q.sample, TabularCritic(2), cfg)
    assert a.to_dict() == b.to_dict()


def test_training_divergence_reports_step():
    cfg = CriticConfig(steps=100, batch_size=64, learning_rate=1e9, optimizer="momentum", seed=0)
    with pytest.raises((TrainingError, EvaluationError)) as err:
        train_critic("pearson_chi2", P.sample, Q.sample, TabularCritic(2), cfg)
    if isinstance(err.value, TrainingError):
        assert err.value.step >= 0


def test_overfitting_demonstration():
    # unlimited capacity on a handful of fixed samples: the estimate is
    # well above the true value 0 even though p = q
    rng = rng_stream(0, "overfit")
    edges = np.linspace(-3, 3, 31)
    xp = np.digitize(rng.normal(size=60), edges)
    xq = np.digitize(rng.normal(size=60), edges)
    cfg = CriticConfig(steps=400, batch_size=2000, learning_rate=0.1, seed=0)
    report = train_critic("kl", empirical_sampler(xp), empirical_sampler(xq), TabularCritic(32), cfg)
    assert report.estimate > 10 * report.standard_error > 0


def test_config_validation():
    with pytest.raises(ValueError):
        CriticConfig(steps=0)
    with pytest.raises(ValueError):
        CriticConfig(learning_rate=0.0)


# -- sample files -------------------------------------------------------------


def test_load_samples(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("# header\n1.5\n\n-2 \n3e-1\n")
    np.testing.assert_array_equal(load_samples(path), [1.5, -2.0, 0.3])
    path.write_text("1 2\n3 4\n")
    assert load_samples(path).shape == (2, 2)


@pytest.mark.parametrize("text", ["", "1 2\n3\n", "1\nabc\n"])
def test_load_samples_errors(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ValueError):
        load_samples(path)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_empirical_sampler_draws_from_data(seed):
    data = np.array([1.0, 5.0, 9.0])
    draws = empirical_sampler(data)(50, rng_stream(seed, "emp"))
    assert set(draws.tolist()) <= set(data.tolist())
