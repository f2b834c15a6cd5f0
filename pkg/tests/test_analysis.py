import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semihdp import analysis as A
from semihdp.distributions import FiniteMixture
from semihdp.state import ChainRecord, format_partition

STD = FiniteMixture.single(0.0, 1.0)


def rec(c, mixtures=None):
    c = np.asarray(c)
    if mixtures is None:
        mixtures = {int(r): STD for r in np.unique(c)}
    return ChainRecord(0, c, 0.5, 0, mixtures, {}, [1] * c.size)


def test_bayes_factor_values():
    recs = [rec([0, 0])] * 99 + [rec([0, 1])]
    assert A.bayes_factor_pair(recs, 0, 1) == pytest.approx(99.0)
    assert A.bayes_factor_from_prob(0.5) == pytest.approx(1.0)
    assert A.bayes_factor_pair([rec([0, 1])] * 3, 0, 1, prior_odds=3.0) == 0.0
    assert math.isinf(A.bayes_factor_pair([rec([0, 0])] * 3, 0, 1))


def test_bayes_factor_rejects_same_group_and_bad_odds():
    with pytest.raises(ValueError):
        A.bayes_factor_pair([rec([0, 0])], 1, 1)
    with pytest.raises(ValueError):
        A.bayes_factor_pair([rec([0, 0])], 0, 1, prior_odds=0.0)
    with pytest.raises(ValueError):
        A.bayes_factor_pair([], 0, 1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99))
def test_bayes_factor_reciprocal(p):
    assert A.bayes_factor_from_prob(p) * A.bayes_factor_from_prob(1 - p) == pytest.approx(1.0)


def test_partition_posterior_merges_label_permutations():
    post = A.partition_posterior([rec([1, 1, 1, 3]), rec([2, 2, 2, 0])])
    assert post.probs == {(0, 0, 0, 1): 1.0}
    assert format_partition(post.most_likely(1)[0][0]) == "{{1,2,3},{4}}"


def test_similarity_single_record():
    S = A.similarity_matrix([rec([0, 1, 0])])
    np.testing.assert_array_equal(S, [[1, 0, 1], [0, 1, 0], [1, 0, 1]])


labelings = st.lists(st.lists(st.integers(0, 3), min_size=4, max_size=4), min_size=1, max_size=30)


@settings(max_examples=60, deadline=None)
@given(labelings)
def test_similarity_consistent_with_partition_posterior(cs):
    recs = [rec(c) for c in cs]
    S = A.similarity_matrix(recs)
    post = A.partition_posterior(recs)
    np.testing.assert_allclose(S, S.T)
    np.testing.assert_allclose(np.diag(S), 1.0)
    assert sum(post.probs.values()) == pytest.approx(1.0)
    expect = np.zeros((4, 4))
    for p, w in post.probs.items():
        p = np.array(p)
        expect += w * (p[:, None] == p[None, :])
    np.testing.assert_allclose(S, expect, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(labelings, st.sampled_from(["binder", "vi"]))
def test_point_partition_is_argmin_over_visited(cs, loss):
    recs = [rec(c) for c in cs]
    best = A.point_partition(recs, loss)
    visited = {tuple(A.canonical_partition(c)) for c in cs}
    assert best in visited
    post = A.partition_posterior(recs)
    S = A.similarity_matrix(recs)

    def score(p):
        if loss == "binder":
            return A.binder_loss(p, S)
        return sum(w * A.variation_of_information(p, q) for q, w in post.probs.items())

    assert all(score(best) <= score(p) + 1e-12 for p in visited)


def test_point_partition_degenerate():
    recs = [rec([0, 1, 1, 0])] * 5
    assert A.point_partition(recs, "binder") == (0, 1, 1, 0)
    assert A.point_partition(recs, "vi") == (0, 1, 1, 0)
    with pytest.raises(ValueError):
        A.point_partition(recs, "other")


def test_variation_of_information_basics():
    assert A.variation_of_information([0, 0, 1], [5, 5, 7]) == pytest.approx(0.0)
    assert A.variation_of_information([0, 0, 0, 0], [0, 1, 2, 3]) == pytest.approx(math.log(4))


def test_density_summary_standard_normal():
    grid = np.linspace(-5, 5, 201)
    d = A.density_summary([rec([0])] * 4, 0, grid)
    np.testing.assert_allclose(d.mean, np.exp(-grid**2 / 2) / math.sqrt(2 * math.pi))
    np.testing.assert_allclose(d.upper95 - d.lower95, 0.0, atol=1e-15)


def test_density_summary_back_transform_integrates_to_one():
    mix = FiniteMixture([0.5, 0.5], [-1.0, 1.2], [0.3, 0.5])
    grid = np.linspace(-40, 60, 20001)
    d = A.density_summary([rec([0], {0: mix})], 0, grid, shift=10.0, scale=4.0)
    assert np.trapezoid(d.mean, grid) == pytest.approx(1.0, abs=1e-3)


def test_functionals_standard_normal():
    f = A.density_functionals(STD, 0.0)
    assert (f.mean, f.variance) == (pytest.approx(0.0), pytest.approx(1.0))
    assert f.pearson_skew == pytest.approx(0.0, abs=1e-12)
    assert f.mode_skew == pytest.approx(0.0, abs=1e-8)
    assert f.pass_prob == pytest.approx(0.5)


def test_functionals_symmetric_bimodal():
    f = A.density_functionals(FiniteMixture([0.5, 0.5], [0.0, 5.0], [1.0, 1.0]), 2.5)
    assert f.mean == pytest.approx(2.5)
    assert f.variance == pytest.approx(7.25)
    assert f.pearson_skew == pytest.approx(0.0, abs=1e-12)
    assert f.pass_prob == pytest.approx(0.5)


def test_functionals_left_skewed_shape():
    f = A.density_functionals(FiniteMixture([0.9, 0.1], [5.0, 0.0], [0.36, 0.36]))
    # mpmath quadrature: mean 4.5, variance 2.61, skewness -2.13443.
    assert f.mean == pytest.approx(4.5)
    assert f.variance == pytest.approx(2.61)
    assert f.pearson_skew == pytest.approx(-2.134429174448872, rel=1e-10)
    assert f.mode == pytest.approx(5.0, abs=1e-4)
    assert f.mode_skew < 0


mixtures = st.integers(1, 4).flatmap(
    lambda k: st.tuples(
        st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k),
        st.lists(st.floats(-4, 4), min_size=k, max_size=k),
        st.lists(st.floats(0.1, 3.0), min_size=k, max_size=k),
    )
).map(lambda t: FiniteMixture(np.array(t[0]) / sum(t[0]), t[1], t[2]))


@settings(max_examples=40, deadline=None)
@given(mixtures)
def test_functionals_match_quadrature(mix):
    x = np.linspace(-30, 30, 100_001)
    p = mix.pdf(x)
    mean = np.trapezoid(x * p, x)
    var = np.trapezoid((x - mean) ** 2 * p, x)
    f = A.density_functionals(mix)
    assert f.mean == pytest.approx(mean, abs=1e-8)
    assert f.variance == pytest.approx(var, abs=1e-8)


def test_mode_of_bimodal_mixture_picks_higher_peak():
    mix = FiniteMixture([0.3, 0.7], [-3.0, 3.0], [1.0, 1.0])
    assert A.mixture_mode(mix) == pytest.approx(3.0, abs=1e-3)


def test_ess_white_noise_and_edge_cases():
    x = np.random.default_rng(0).normal(size=4000)
    assert abs(A.effective_sample_size(x) - 4000) < 400
    assert A.effective_sample_size(np.ones(50)) == 50
    alt = np.tile([1.0, 2.0], 500)
    assert A.effective_sample_size(alt) > 500


def test_ess_of_cluster_count():
    recs = [rec([0, k % 2]) for k in range(40)]
    assert A.ess_population_clusters(recs) > 20
    with pytest.raises(ValueError):
        A.ess_population_clusters(recs[:5])


def test_functional_table_and_writers(tmp_path):
    recs = [rec([0, 1]), rec([0, 0])]
    table = A.functional_table(recs, [0, 1], 0.0)
    assert table[0]["pass_prob"] == pytest.approx(0.5)
    A.write_functionals_csv(table, tmp_path / "f.csv", ["a", "b"])
    A.write_similarity_csv(A.similarity_matrix(recs), tmp_path / "s.csv")
    A.write_partitions_csv(A.partition_posterior(recs), tmp_path / "p.csv")
    grid = np.linspace(-3, 3, 5)
    A.write_density_csv(A.density_summary(recs, 1, grid), tmp_path / "d.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "group,mean,variance,pearson_skew,mode_skew,pass_prob"
    assert (tmp_path / "s.csv").read_text().splitlines()[2] == "2,0.500000,1.000000"
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 6
    assert (tmp_path / "p.csv").read_text().count("\n") == 3
