import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from semihdp.distributions import (
    FiniteMixture,
    GaussianParam,
    NIGBase,
    crp_cluster_count_pmf,
    mixture_l2_distance_sq,
    nig_log_marginal,
    nig_marginal_density,
    nig_posterior_draw,
    normal_product_integral,
    stick_breaking_weights,
)
from semihdp.theory import eppf_dp, set_partitions

BASE = NIGBase()

# Frozen from mpmath integration over sigma2 of the N(0, 11 sigma2) convolution.
NIG_AT_ZERO = 0.1066003581778052
NIG_PAIR_AT_ZERO = 0.0347304559021428


def test_marginal_single_point_matches_quadrature_value():
    assert nig_marginal_density([0.0], BASE) == pytest.approx(NIG_AT_ZERO, rel=1e-12)


def test_marginal_pair_shows_positive_dependence():
    pair = nig_marginal_density([0.0, 0.0], BASE)
    assert pair == pytest.approx(NIG_PAIR_AT_ZERO, rel=1e-12)
    assert pair > nig_marginal_density([0.0], BASE) ** 2


def test_marginal_needs_points():
    with pytest.raises(ValueError):
        nig_log_marginal([], BASE)


def test_marginal_single_point_integrates_to_one():
    val, _ = integrate.quad(lambda y: nig_marginal_density([y], BASE), -np.inf, np.inf)
    assert val == pytest.approx(1.0, abs=1e-4)


def test_marginal_rejects_non_finite():
    with pytest.raises(ValueError):
        nig_marginal_density([np.nan], BASE)


def test_marginal_agrees_with_predictive_chain_rule():
    y = [0.3, -1.2, 2.0]
    lm = nig_log_marginal(y, BASE)
    acc = nig_log_marginal(y[:1], BASE)
    for k in range(1, len(y)):
        acc += nig_log_marginal(y[: k + 1], BASE) - nig_log_marginal(y[:k], BASE)
    assert lm == pytest.approx(acc)
    assert BASE.log_predictive(1.7) == pytest.approx(nig_log_marginal([1.7], BASE))


@pytest.mark.parametrize("field,value", [("lam", 0.0), ("shape", -1.0), ("rate", math.inf)])
def test_base_rejects_bad_parameters(field, value):
    with pytest.raises(ValueError):
        NIGBase(**{field: value})


def test_prior_draw_sigma2_median():
    rng = np.random.default_rng(0)
    draws = [nig_posterior_draw([], BASE, rng).sigma2 for _ in range(20000)]
    # Inverse-gamma(1, 1) median is 1 / log 2.
    n = len(draws)
    below = np.mean(np.array(draws) < 1.0 / math.log(2.0))
    assert abs(below - 0.5) < 3 * math.sqrt(0.25 / n)


def test_posterior_concentrates():
    rng = np.random.default_rng(1)
    d = nig_posterior_draw(np.zeros(10**6), BASE, rng)
    assert abs(d.mu) < 0.01


def test_posterior_mean_matches_conjugate_formula():
    rng = np.random.default_rng(2)
    y = np.full(100, 5.0)
    mu = np.array([nig_posterior_draw(y, BASE, rng).mu for _ in range(4000)])
    expected = (0.1 * 0.0 + 500.0) / (0.1 + 100)
    assert abs(mu.mean() - expected) < 3 * mu.std(ddof=1) / math.sqrt(mu.size)


def test_stick_breaking_telescopes():
    w, eps = stick_breaking_weights(1.0, 10, np.random.default_rng(3))
    assert w.sum() + eps == pytest.approx(1.0, abs=1e-15)


def test_stick_breaking_residual_mean():
    rng = np.random.default_rng(4)
    M = 5
    res = np.array([stick_breaking_weights(1.0, M, rng)[1] for _ in range(10000)])
    assert abs(res.mean() - 0.5**M) < 3 * res.std(ddof=1) / math.sqrt(res.size)


def test_stick_breaking_small_concentration():
    w, _ = stick_breaking_weights(1e-6, 1, np.random.default_rng(5))
    assert w[0] > 0.99


def test_stick_breaking_rejects_bad_input():
    with pytest.raises(ValueError):
        stick_breaking_weights(0.0, 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        stick_breaking_weights(1.0, 0, np.random.default_rng(0))


def test_crp_pmf_small_cases():
    np.testing.assert_allclose(crp_cluster_count_pmf(2, 1.0), [0.5, 0.5])
    np.testing.assert_allclose(crp_cluster_count_pmf(3, 1.0), [1 / 3, 1 / 2, 1 / 6])


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("alpha", [0.3, 1.0, 4.0])
def test_crp_pmf_matches_partition_enumeration(n, alpha):
    by_count = np.zeros(n)
    for p in set_partitions(n):
        sizes = np.bincount(p)
        by_count[sizes.size - 1] += eppf_dp(sizes, alpha)
    np.testing.assert_allclose(crp_cluster_count_pmf(n, alpha), by_count, atol=1e-12)


def test_normal_product_integral_values():
    assert normal_product_integral(GaussianParam(0, 1), GaussianParam(0, 1)) == pytest.approx(1 / math.sqrt(4 * math.pi))
    # mpmath quadrature of N(y;2,1)N(y;0,1).
    assert normal_product_integral(GaussianParam(2, 1), GaussianParam(0, 1)) == pytest.approx(0.1037768743551487, rel=1e-12)


def test_l2_values():
    a, b = FiniteMixture.single(0.0, 1.0), FiniteMixture.single(2.0, 1.0)
    assert mixture_l2_distance_sq(a, a) == pytest.approx(0.0, abs=1e-15)
    assert mixture_l2_distance_sq(a, b) == pytest.approx(0.3566358348374589, rel=1e-12)
    assert mixture_l2_distance_sq(a, b) == pytest.approx(2 * (1 - math.exp(-1)) / math.sqrt(4 * math.pi))


def test_l2_matches_trapezoid_on_wide_grid():
    rng = np.random.default_rng(6)
    x = np.linspace(-30, 30, 100_001)
    for _ in range(20):
        k1, k2 = rng.integers(1, 4, size=2)
        a = FiniteMixture(rng.dirichlet(np.ones(k1)), rng.normal(0, 2, k1), rng.uniform(0.2, 2, k1))
        b = FiniteMixture(rng.dirichlet(np.ones(k2)), rng.normal(0, 2, k2), rng.uniform(0.2, 2, k2))
        quad = np.trapezoid((a.pdf(x) - b.pdf(x)) ** 2, x)
        assert mixture_l2_distance_sq(a, b) == pytest.approx(quad, abs=1e-6)


def test_mixture_validation():
    with pytest.raises(ValueError):
        FiniteMixture([0.5, 0.6], [0, 1], [1, 1])
    with pytest.raises(ValueError):
        FiniteMixture([1.0], [0.0], [0.0])
    with pytest.raises(ValueError):
        GaussianParam(0.0, -1.0)


def test_mixture_roundtrip_and_cdf():
    m = FiniteMixture([0.3, 0.7], [-1.0, 2.0], [0.5, 1.5])
    back = FiniteMixture.from_dict(m.to_dict())
    for f in ("weights", "mu", "sigma2"):
        np.testing.assert_array_equal(getattr(back, f), getattr(m, f))
    val, _ = integrate.quad(m.pdf, -np.inf, 0.4)
    assert float(m.cdf(0.4)) == pytest.approx(val, abs=1e-10)


def test_logpdf_far_tail_is_finite():
    m = FiniteMixture([0.5, 0.5], [0.0, 1.0], [1.0, 1.0])
    assert np.isfinite(m.logpdf(1e3))


mixtures = st.integers(1, 4).flatmap(
    lambda k: st.tuples(
        st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k),
        st.lists(st.floats(-5, 5), min_size=k, max_size=k),
        st.lists(st.floats(0.05, 4.0), min_size=k, max_size=k),
    )
).map(lambda t: FiniteMixture(np.array(t[0]) / sum(t[0]), t[1], t[2]))


@settings(max_examples=60, deadline=None)
@given(mixtures, mixtures, mixtures)
def test_l2_triangle_inequality(a, b, c):
    ab = math.sqrt(mixture_l2_distance_sq(a, b))
    bc = math.sqrt(mixture_l2_distance_sq(b, c))
    ac = math.sqrt(mixture_l2_distance_sq(a, c))
    assert ac <= ab + bc + 1e-9


@settings(max_examples=60, deadline=None)
@given(mixtures, mixtures)
def test_l2_symmetric_nonnegative(a, b):
    d = mixture_l2_distance_sq(a, b)
    assert d >= 0
    assert d == pytest.approx(mixture_l2_distance_sq(b, a), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(-3, 3), st.floats(0.1, 3))
def test_normal_product_symmetric(m1, v1, m2, v2):
    p, q = GaussianParam(m1, v1), GaussianParam(m2, v2)
    assert normal_product_integral(p, q) == pytest.approx(normal_product_integral(q, p))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.floats(0.05, 20))
def test_crp_pmf_normalised(n, alpha):
    assert crp_cluster_count_pmf(n, alpha).sum() == pytest.approx(1.0, abs=1e-12)
