import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats, special

from gfk.weights import (WeightedField, WeightedSpace, rho, rho_inv_gradient_bound_check,
                         sample_from_weight_density, weight_mass, weighted_lp_norm)


@pytest.mark.parametrize("x, expected", [(0.0, 1.0), (1.0, 4.0), (-3.0, 16.0)])
def test_rho_values(space, x, expected):
    assert rho(space, x) == expected


def test_rho_uses_euclidean_norm():
    sp = WeightedSpace(d=2, q=3.0, n_quad=11)
    assert rho(sp, np.array([3.0, 4.0])) == pytest.approx(6.0**3)
    pts = np.random.default_rng(0).normal(size=(100, 2)) * 5
    assert np.all(rho(sp, pts) >= 1.0)


def test_q_must_exceed_d():
    with pytest.raises(ValueError, match="q must exceed d"):
        WeightedSpace(d=1, q=1.0)
    with pytest.raises(ValueError, match="q must exceed d"):
        WeightedSpace(d=2, q=1.5, n_quad=11)


def test_gradient_bound_examples():
    assert rho_inv_gradient_bound_check(WeightedSpace(d=1, q=2.0), [1.0])
    theta = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    assert rho_inv_gradient_bound_check(WeightedSpace(d=2, q=3.0, n_quad=11), circle)
    with pytest.raises(ValueError):
        rho_inv_gradient_bound_check(WeightedSpace(d=1, q=2.0), [0.0])


def test_gradient_at_one_matches_hand_derivative():
    # d/dx (1 + x)^{-2} at x = 1 is -2 / 8 = -0.25
    sp = WeightedSpace()
    h = 1e-6
    fd = (1 / rho(sp, 1 + h) - 1 / rho(sp, 1 - h)) / (2 * h)
    assert fd == pytest.approx(-0.25, rel=1e-8)


def test_weight_mass_against_quadrature():
    for d, q in [(1, 2.0), (1, 3.5), (2, 3.0), (3, 5.0)]:
        radial, _ = integrate.quad(lambda r: r ** (d - 1) * (1 + r) ** (-q), 0, np.inf)
        sphere = 2 * np.pi ** (d / 2) / special.gamma(d / 2)
        assert weight_mass(d, q) == pytest.approx(sphere * radial, rel=1e-8)
    assert weight_mass(1, 1.0) == float("inf")


def test_norm_of_zero_field(space):
    assert weighted_lp_norm(space, space.field(np.zeros(space.n_quad)), 2) == 0.0


def test_norm_of_one_matches_closed_form(space):
    # int_{-L}^{L} (1 + |x|)^{-2} dx = 2 (1 - 1/(1 + L)), -> 2 as L -> infinity
    ones = space.field(np.ones(space.n_quad))
    L = space.L_domain
    exact = 2 * (1 - 1 / (1 + L))
    oracle, _ = integrate.quad(lambda x: (1 + abs(x)) ** -2.0, -L, L, points=[0.0])
    assert oracle == pytest.approx(exact, rel=1e-12)
    # trapezoid error is O(h^2), dominated by the kink of rho^{-1} at 0
    err = abs(weighted_lp_norm(space, ones, 2) ** 2 - exact)
    assert err < 1e-4 * exact
    fine = WeightedSpace(n_quad=2 * space.n_quad - 1)
    err_fine = abs(weighted_lp_norm(fine, fine.field(np.ones(fine.n_quad)), 2) ** 2 - exact)
    assert 3.5 < err / err_fine < 4.5
    big = space.with_domain(2000.0)
    n_big = weighted_lp_norm(big, big.field(np.ones(big.n_quad)), 2)
    assert abs(n_big - np.sqrt(2)) < 1e-3
    assert abs(n_big - np.sqrt(2)) < abs(weighted_lp_norm(space, ones, 2) - np.sqrt(2))


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-1e6, 1e6, allow_nan=False), two_p=st.sampled_from([2, 4, 6]))
def test_homogeneity(c, two_p):
    sp = WeightedSpace(n_quad=401)
    f = sp.evaluate(lambda x: np.exp(-x[:, 0] ** 2) + 0.3 * np.sin(x[:, 0]))
    lhs = weighted_lp_norm(sp, c * f, two_p)
    assert lhs == pytest.approx(abs(c) * weighted_lp_norm(sp, f, two_p), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("two_p", [0, 1, 3, -2, 2.5])
def test_rejects_bad_exponent(space, two_p):
    with pytest.raises(ValueError):
        weighted_lp_norm(space, space.field(np.ones(space.n_quad)), two_p)


def test_rejects_field_on_other_grid(space):
    other = WeightedSpace(n_quad=101)
    with pytest.raises(ValueError):
        weighted_lp_norm(space, other.field(np.ones(101)), 2)


def test_monotone_in_domain_with_tail_bound():
    sp = WeightedSpace(L_domain=10.0, n_quad=1001)
    big = sp.with_domain(20.0)
    fn = lambda x: np.cos(x[:, 0]) + 2.0  # noqa: E731
    small_norm = weighted_lp_norm(sp, sp.evaluate(fn), 4)
    big_norm = weighted_lp_norm(big, big.evaluate(fn), 4)
    assert small_norm <= big_norm
    # tail: sup|f|^4 * int_{|x|>10} (1+|x|)^{-2} = 3^4 * 2/11
    assert big_norm**4 - small_norm**4 <= 3.0**4 * 2 / 11


@settings(max_examples=25, deadline=None)
@given(coef=st.lists(st.floats(-3, 3), min_size=1, max_size=4), p=st.sampled_from([2, 3]))
def test_hoelder_consistency(coef, p):
    sp = WeightedSpace(L_domain=5.0, n_quad=501)
    f = sp.evaluate(lambda x: np.polyval(coef, x[:, 0]))
    mass = sp.integrate(np.ones(sp.shape))
    lhs = weighted_lp_norm(sp, f, 2)
    rhs = weighted_lp_norm(sp, f, 2 * p) * mass ** ((p - 1) / (2 * p))
    assert lhs <= rhs * (1 + 1e-10) + 1e-300


def test_field_invariants():
    with pytest.raises(ValueError):
        WeightedField((np.array([0.0, 0.0, 1.0]),), np.zeros(3))
    with pytest.raises(ValueError):
        WeightedField((np.array([0.0, 1.0]),), np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        WeightedField((np.array([0.0, 1.0]),), np.zeros(3))


def test_field_interpolation_constant_outside():
    f = WeightedField((np.array([0.0, 1.0, 2.0]),), np.array([1.0, 3.0, 5.0]))
    assert np.allclose(f(np.array([[0.5], [-4.0], [9.0]])), [2.0, 1.0, 5.0])


def test_sampler_mass_inside_unit_ball(space):
    x = sample_from_weight_density(space, 100_000, seed=11)
    assert x.shape == (100_000, 1)
    assert abs(np.mean(np.abs(x) <= 1) - 0.5) < 3e-3


def test_sampler_single_point_and_determinism(space):
    one = sample_from_weight_density(space, 1, seed=5)
    assert one.shape == (1, 1) and np.all(np.isfinite(one))
    a = sample_from_weight_density(space, 1000, seed=3)
    b = sample_from_weight_density(space, 1000, seed=3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_from_weight_density(space, 1000, seed=4))
    with pytest.raises(ValueError):
        sample_from_weight_density(space, 0, seed=1)


@pytest.mark.parametrize("q", [2.0, 3.5])
def test_sampler_chi_square(q):
    sp = WeightedSpace(q=q)
    x = sample_from_weight_density(sp, 100_000, seed=2)[:, 0]
    # analytic CDF: F(x) = (1 + |x|)^{1-q} / 2 for x < 0, 1 - that for x >= 0
    edges = np.array([-np.inf, -5, -2, -1, -0.5, -0.2, 0, 0.2, 0.5, 1, 2, 5, np.inf])

    def cdf(v):
        tail = 0.5 * (1 + np.abs(v)) ** (1 - q)
        return np.where(v < 0, tail, 1 - tail)

    probs = np.diff(np.concatenate([[0.0], cdf(edges[1:-1]), [1.0]]))
    observed = np.histogram(x, bins=edges)[0]
    assert stats.chisquare(observed, probs * len(x)).pvalue > 0.01


def test_sampler_radial_law_in_two_dimensions():
    sp = WeightedSpace(d=2, q=3.0, n_quad=11)
    x = sample_from_weight_density(sp, 50_000, seed=9)
    r = np.linalg.norm(x, axis=1)
    # R / (1 + R) ~ Beta(d, q - d)
    assert stats.kstest(r / (1 + r), stats.beta(2, 1).cdf).pvalue > 0.01
    angle = np.arctan2(x[:, 1], x[:, 0])
    assert stats.kstest(angle, stats.uniform(-np.pi, 2 * np.pi).cdf).pvalue > 0.01
