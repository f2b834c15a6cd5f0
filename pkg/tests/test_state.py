import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semihdp.distributions import FiniteMixture
from semihdp.sampler import init_state
from semihdp.state import (
    ChainRecord,
    Dataset,
    HyperParams,
    canonical_partition,
    format_partition,
    parse_partition,
    read_records,
    validate_state,
    write_records,
)


def test_dataset_rejects_empty_and_non_finite():
    with pytest.raises(ValueError):
        Dataset([])
    with pytest.raises(ValueError):
        Dataset([np.array([1.0, np.nan])])


def test_hyper_defaults_and_validation():
    h = HyperParams(4)
    np.testing.assert_allclose(h.eta, 0.25)
    assert (h.alpha, h.gamma, h.a_kappa, h.b_kappa) == (1.0, 1.0, 2.0, 2.0)
    with pytest.raises(ValueError):
        HyperParams(2, alpha=0.0)
    with pytest.raises(ValueError):
        HyperParams(2, eta=[1.0])
    with pytest.raises(ValueError):
        HyperParams(2, fixed_kappa=1.5)


def test_init_state_identity_labels_and_valid(small_data, small_hyper):
    state = init_state(small_data, small_hyper, np.random.default_rng(0))
    np.testing.assert_array_equal(state.c, [0, 1, 2])
    assert validate_state(state) == []
    assert 0 < state.kappa < 1
    assert state.omega.sum() == pytest.approx(1.0, abs=1e-12)


def test_init_single_group():
    data = Dataset([np.array([0.1, 0.2, -0.3])])
    state = init_state(data, HyperParams(1), np.random.default_rng(0))
    assert state.restaurants[0].n_live >= 1
    assert validate_state(state) == []


def test_validate_detects_count_fault(small_data, small_hyper):
    state = init_state(small_data, small_hyper, np.random.default_rng(1))
    state.restaurants[0].tables.n[0] += 1
    problems = validate_state(state)
    assert len(problems) == 1 and problems[0].startswith("count mismatch")


def test_validate_detects_dangling_reference(small_data, small_hyper):
    state = init_state(small_data, small_hyper, np.random.default_rng(2))
    tb = state.restaurants[0].tables
    slot = int(state.s[0][0])
    if tb.h[slot] == 1:
        tb.t[slot] = 10_000
    else:
        # Keep multiplicities consistent so only the reference breaks.
        state.shared.m[tb.t[slot]] -= 1
        tb.h[slot], tb.t[slot] = 1, 10_000
    problems = validate_state(state)
    assert len(problems) == 1 and problems[0].startswith("dangling reference")


def test_canonical_partition_examples():
    assert canonical_partition((1, 1, 1, 3)) == canonical_partition((2, 2, 2, 4))
    assert format_partition((1, 1, 1, 3)) == "{{1,2,3},{4}}"
    assert format_partition((1, 2, 3)) == "{{1},{2},{3}}"


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=12), st.permutations(range(6)))
def test_canonical_partition_label_invariance(c, perm):
    assert canonical_partition([perm[x] for x in c]) == canonical_partition(c)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=12))
def test_format_parse_roundtrip(c):
    assert parse_partition(format_partition(c), len(c)) == canonical_partition(c)


def test_record_json_roundtrip(tmp_path):
    rec = ChainRecord(
        iteration=7,
        c=np.array([0, 0, 2]),
        kappa=0.4,
        H0=3,
        mixtures={0: FiniteMixture([0.25, 0.75], [0.0, 1.0], [1.0, 2.0]), 2: FiniteMixture.single(3.0, 0.5)},
        tables={0: {"n": [1, 3]}, 2: {"n": [4]}},
        unique_counts=[2, 2, 1],
        shared_counts=[[2, 1, 0], [1, 2, 0], [0, 0, 1]],
        trunc_error=1e-5,
    )
    path = tmp_path / "r.jsonl"
    write_records([rec, rec], path)
    back = read_records(path)
    assert len(back) == 2
    assert back[0].to_json() == rec.to_json()
    assert json.loads(rec.to_json())["iter"] == 7
    assert back[0].mixture_for_group(1).mu[0] == 0.0
