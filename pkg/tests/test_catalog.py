import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdivlab.catalog import (
    BUILTIN_NAMES,
    CatalogError,
    builtin,
    canonicalize,
    combine,
    reverse,
    scale,
    two_point_construction,
)
from fdivlab.exact import divergence

# Independent closed forms of the canonical defining functions and their
# second derivatives, written out by hand.
F_ORACLE = {
    "kl": lambda u: u * math.log(u) - u + 1,
    "reverse_kl": lambda u: -math.log(u) + u - 1,
    "jensen_shannon": lambda u: 2 * (u * math.log(u) - (u + 1) * math.log((u + 1) / 2)),
    "squared_hellinger": lambda u: 2 * (math.sqrt(u) - 1) ** 2,
    "jeffreys": lambda u: 0.5 * (u - 1) * math.log(u),
    "le_cam": lambda u: (u - 1) ** 2 / (u + 1),
    "pearson_chi2": lambda u: 0.5 * (u - 1) ** 2,
    "neymann": lambda u: 0.5 * (u - 1) ** 2 / u,
    "softened_reverse_kl": lambda u: 2 * (u + 1) * math.log((u + 1) / (2 * u)) + 2 * (u - 1),
}
F2_ORACLE = {
    "kl": lambda u: 1 / u,
    "reverse_kl": lambda u: 1 / u**2,
    "jensen_shannon": lambda u: 2 / (u * (1 + u)),
    "squared_hellinger": lambda u: u**-1.5,
    "jeffreys": lambda u: (1 + u) / (2 * u**2),
    "le_cam": lambda u: 8 / (1 + u) ** 3,
    "pearson_chi2": lambda u: 1.0,
    "neymann": lambda u: u**-3,
    "softened_reverse_kl": lambda u: 2 / (u**2 * (1 + u)),
}
U_GRID = (0.1, 0.5, 1.0, 2.0, 10.0)
D_GRID = (-3.0, -1.0, 0.0, 1.0, 3.0)


def test_oracle_tables_cover_catalog():
    assert set(F_ORACLE) == set(BUILTIN_NAMES) == set(F2_ORACLE)


@pytest.mark.parametrize("u", U_GRID + (0.003, 37.0))
def test_f_and_f2_match_closed_forms(spec, u):
    assert spec.f(u) == pytest.approx(F_ORACLE[spec.name](u), rel=1e-12, abs=1e-14)
    assert spec.f2(u) == pytest.approx(F2_ORACLE[spec.name](u), rel=1e-12)


def test_normalization_and_canonicality(spec):
    assert abs(spec.f(1.0)) < 1e-12
    assert abs(spec.f1(1.0)) < 1e-12
    assert abs(spec.f2(1.0) - 1.0) < 1e-12
    assert spec.curvature_at_one == spec.f2(1.0)


def test_strict_convexity_on_log_grid(spec):
    u = np.logspace(-6, 6, 241)
    assert np.all(spec.f2(u) > 0)


def test_nonnegative_and_zero_only_at_one(spec):
    u = np.logspace(-3, 3, 121)
    vals = spec.f(u)
    assert np.all(vals[np.abs(u - 1) > 1e-9] > 0)
    assert spec.f(1.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("u", U_GRID)
def test_derivatives_match_finite_differences(spec, u):
    h = 1e-5 * u
    fd1 = (spec.f(u + h) - spec.f(u - h)) / (2 * h)
    fd2 = (spec.f1(u + h) - spec.f1(u - h)) / (2 * h)
    assert fd1 == pytest.approx(spec.f1(u), rel=1e-6, abs=1e-9)
    assert fd2 == pytest.approx(spec.f2(u), rel=1e-6)


@pytest.mark.parametrize("d", D_GRID)
def test_ab_identities_on_grid(spec, d):
    u = math.exp(d)
    assert spec.a(d) == pytest.approx(spec.f1(u), rel=1e-12, abs=1e-12)
    assert spec.b(d) == pytest.approx(u * spec.f1(u) - spec.f(u), rel=1e-12, abs=1e-12)
    assert spec.b1(d) == pytest.approx(spec.a1(d) * u, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BUILTIN_NAMES), st.floats(-6, 6))
def test_a1_is_derivative_of_a(name, d):
    s = builtin(name)
    h = 1e-5
    fd = (s.a(d + h) - s.a(d - h)) / (2 * h)
    assert fd == pytest.approx(s.a1(d), rel=1e-5, abs=1e-7)
    fdb = (s.b(d + h) - s.b(d - h)) / (2 * h)
    assert fdb == pytest.approx(s.b1(d), rel=1e-5, abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BUILTIN_NAMES), st.floats(-30, 30))
def test_a_b_finite_for_large_critics(name, d):
    s = builtin(name)
    for fn in (s.a, s.b, s.a1, s.b1):
        assert np.isfinite(fn(d))


def test_vectorised_evaluation_matches_scalar(spec):
    d = np.array(D_GRID)
    np.testing.assert_array_equal(spec.a(d), [spec.a(x) for x in d])
    assert isinstance(spec.f(2.0), float)


@pytest.mark.parametrize("u", U_GRID)
def test_mean_relations(u):
    kl, rkl = builtin("kl").f2(u), builtin("reverse_kl").f2(u)
    assert builtin("jensen_shannon").f2(u) == pytest.approx(2 / (1 / kl + 1 / rkl), rel=1e-12)
    assert builtin("squared_hellinger").f2(u) == pytest.approx(math.sqrt(kl * rkl), rel=1e-12)
    assert builtin("jeffreys").f2(u) == pytest.approx(0.5 * (kl + rkl), rel=1e-12)


def test_f_at_zero_is_limit_or_infinite():
    assert builtin("reverse_kl").f(0.0) == math.inf
    assert builtin("neymann").f(0.0) == math.inf
    assert builtin("kl").f(0.0) == 1.0
    assert builtin("pearson_chi2").f(0.0) == 0.5


# -- builtin examples ---------------------------------------------------------


def test_builtin_examples():
    assert builtin("kl").f2(2) == 0.5
    assert builtin("kl").a(0.7) == pytest.approx(0.7, abs=1e-15)
    assert builtin("jensen_shannon").f(1) == 0
    assert builtin("le_cam").f2(1) == 1


def test_unknown_name_raises():
    with pytest.raises(CatalogError):
        builtin("total_variation")


def test_tail_weights_are_metadata(spec):
    assert len(spec.tail_weights) == 2
    assert all(isinstance(w, float) for w in spec.tail_weights)


# -- constructors -------------------------------------------------------------


def test_scale_examples():
    assert scale(builtin("kl"), 2).f2(1) == 2
    assert scale(builtin("pearson_chi2"), 2).f(3) == pytest.approx(4.0, rel=1e-15)
    s = scale("jensen_shannon", 1)
    base = builtin("jensen_shannon")
    for u in U_GRID:
        assert s.f(u) == base.f(u)
    for d in D_GRID:
        assert s.b1(d) == base.b1(d)


@pytest.mark.parametrize("k", [0.0, -1.0])
def test_scale_rejects_nonpositive(k):
    with pytest.raises(CatalogError):
        scale("kl", k)


def test_scale_multiplies_every_field(spec):
    s = scale(spec, 3.0)
    assert s.curvature_at_one == pytest.approx(3.0)
    for fld in ("f", "f1", "f2"):
        assert getattr(s, fld)(2.0) == pytest.approx(3 * getattr(spec, fld)(2.0), rel=1e-14)
    for fld in ("a", "b", "a1", "b1"):
        assert getattr(s, fld)(0.5) == pytest.approx(3 * getattr(spec, fld)(0.5), rel=1e-14)


def test_combine_examples():
    j = combine(0.5, builtin("kl"), 0.5, builtin("reverse_kl"))
    for u in (0.5, 1.0, 2.0):
        assert j.f2(u) == builtin("jeffreys").f2(u)
    assert j.f2(2) == 0.375
    k = combine(1, "kl", 0, "reverse_kl")
    for u in U_GRID:
        assert k.f(u) == builtin("kl").f(u)


def test_combine_rejects_zero_weights():
    with pytest.raises(CatalogError):
        combine(0, "kl", 0, "reverse_kl")


def test_reverse_examples():
    r = reverse(builtin("kl"))
    for d in (-1.0, 0.0, 1.0):
        assert r.a(d) == pytest.approx(builtin("reverse_kl").a(d), abs=1e-15)
        assert r.a(d) == pytest.approx(1 - math.exp(-d), abs=1e-15)
    assert reverse("jensen_shannon").f(2) == pytest.approx(builtin("jensen_shannon").f(2), rel=1e-15)
    assert reverse("pearson_chi2").f2(2) == pytest.approx(0.125, rel=1e-15)


def test_reverse_is_involution(spec):
    rr = reverse(reverse(spec))
    assert rr.name == spec.name
    for u in U_GRID:
        assert rr.f(u) == pytest.approx(spec.f(u), rel=1e-12, abs=1e-14)
        assert rr.f2(u) == pytest.approx(spec.f2(u), rel=1e-12)
    for d in D_GRID:
        for fld in ("a", "b", "a1", "b1"):
            assert getattr(rr, fld)(d) == pytest.approx(getattr(spec, fld)(d), rel=1e-12, abs=1e-14)


def test_reverse_swaps_arguments(spec):
    p, q = two_point_construction(3.0)
    assert divergence(reverse(spec), p, q) == pytest.approx(divergence(spec, q, p), rel=1e-12)


def test_reverse_preserves_ab_identities(spec):
    r = reverse(spec)
    for d in D_GRID:
        u = math.exp(d)
        assert r.a(d) == pytest.approx(r.f1(u), rel=1e-12, abs=1e-12)
        assert r.b(d) == pytest.approx(u * r.f1(u) - r.f(u), rel=1e-12, abs=1e-12)


def test_canonicalize_examples():
    assert canonicalize(scale("kl", 7)).f2(1) == pytest.approx(1.0, rel=1e-15)
    c = canonicalize(builtin("kl"))
    for u in U_GRID:
        assert c.f(u) == builtin("kl").f(u)
    assert canonicalize(scale("jensen_shannon", 0.25)).f(3) == builtin("jensen_shannon").f(3)


# -- two-point construction ---------------------------------------------------


def test_two_point_examples():
    p, q = two_point_construction(2)
    np.testing.assert_allclose(p.probs, [2 / 3, 1 / 3], rtol=1e-15)
    np.testing.assert_allclose(q.probs, [1 / 3, 2 / 3], rtol=1e-15)
    p, q = two_point_construction(0.5)
    np.testing.assert_allclose(p.probs, [1 / 3, 2 / 3], rtol=1e-15)
    np.testing.assert_allclose(q.probs, [2 / 3, 1 / 3], rtol=1e-15)


@pytest.mark.parametrize("u", [0.3, 2.0, 10.0])
def test_two_point_ratio(u):
    p, q = two_point_construction(u)
    assert p.probs[0] / q.probs[0] == pytest.approx(u, rel=1e-15)


@pytest.mark.parametrize("u", [1.0, 0.0, -2.0])
def test_two_point_domain(u):
    with pytest.raises(CatalogError):
        two_point_construction(u)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(BUILTIN_NAMES), st.floats(1.05, 20.0))
def test_two_point_identity_above_one(name, u):
    s = builtin(name)
    p, q = two_point_construction(u)
    lhs = (2 * u - 1) * divergence(s, p, q)
    rhs = s.f(u) + 2 * (u - 1) * s.f(0.5)
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-12)
