import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semihdp.scenarios import (
    DataError,
    TRUE_PARTITIONS,
    generate_scenario,
    ingest_csv,
    preprocess,
    sample_skew_normal,
    scenario_spec,
    write_csv,
)
from semihdp.state import Dataset


def test_scenario_one_is_bimodal_near_zero_and_five():
    data = generate_scenario(scenario_spec("I", seed=3))
    assert data.sizes == [100, 100]
    for g in data.groups:
        assert np.sum(np.abs(g) < 2.5) > 30 and np.sum(np.abs(g - 5) < 2.5) > 30


def test_scenario_seven_shape():
    spec = scenario_spec("VII")
    data = generate_scenario(spec)
    assert data.n_groups == 100 and set(data.sizes) == {100}
    assert spec.true_partition == tuple(i // 20 for i in range(100))


@pytest.mark.parametrize("sid", ["I", "II", "III", "IV", "V", "VI"])
def test_true_partitions_length(sid):
    spec = scenario_spec(sid)
    assert len(spec.populations) == len(TRUE_PARTITIONS[sid])


def test_scenario_five_variances():
    data = generate_scenario(scenario_spec("V", n_per_group=20000, seed=1))
    sd = [g.std() for g in data.groups]
    np.testing.assert_allclose(sd, [1.0, 1.5, 0.5, 1.0], rtol=0.03)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        scenario_spec("VIII")


def test_skew_normal_mean():
    x = sample_skew_normal(0.0, 1.0, 1.0, 10**6, np.random.default_rng(0))
    assert abs(x.mean() - 1 / math.sqrt(math.pi)) < 3 * x.std() / 1000


def test_generation_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(generate_scenario(scenario_spec("IV", seed=9)), a)
    write_csv(generate_scenario(scenario_spec("IV", seed=9)), b)
    assert a.read_bytes() == b.read_bytes()


def test_preprocess_standardises_and_identity():
    data = Dataset([np.array([1.0, 2.0, 4.0]), np.array([10.0, -3.0])])
    out, tr = preprocess(data)
    pooled = out.pooled()
    assert abs(pooled.mean()) < 1e-12 and abs(pooled.std(ddof=1) - 1) < 1e-12
    np.testing.assert_allclose(tr.to_original(out.groups[1]), data.groups[1])
    same, tr0 = preprocess(data, standardize=False)
    assert same == data and (tr0.mean, tr0.sd) == (0.0, 1.0)


def test_preprocess_jitter_variance():
    data = Dataset([np.zeros(20000)])
    out, _ = preprocess(data, 0.1, standardize=False, rng=np.random.default_rng(1))
    v = out.groups[0].var(ddof=1)
    assert abs(v - 0.1) < 3 * 0.1 * math.sqrt(2 / 20000)


def test_preprocess_errors():
    with pytest.raises(DataError):
        preprocess(Dataset([np.ones(4)]))
    with pytest.raises(ValueError):
        preprocess(Dataset([np.ones(4)]), jitter_variance=-1.0)


def test_ingest_basic_and_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,1.0\nb,2.0\n")
    d = ingest_csv(p)
    assert d.group_ids == ["a", "b"] and d.sizes == [1, 1]
    p.write_text("group,value\nb,1\na,2\nb,3\n")
    d = ingest_csv(p)
    assert d.group_ids == ["b", "a"] and d.sizes == [2, 1]


def test_ingest_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,NaN\n")
    with pytest.raises(DataError, match="row 1"):
        ingest_csv(p)
    p.write_text("a,1\nb,x\n")
    with pytest.raises(DataError, match="row 2"):
        ingest_csv(p)
    p.write_text("a,1,2\n")
    with pytest.raises(DataError, match="row 1"):
        ingest_csv(p)
    p.write_text("")
    with pytest.raises(DataError):
        ingest_csv(p)
    with pytest.raises(DataError):
        ingest_csv(tmp_path / "missing.csv")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=5), min_size=1, max_size=4))
def test_csv_roundtrip(tmp_path_factory, groups):
    data = Dataset([np.array(g) for g in groups], [f"g{k}" for k in range(len(groups))])
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(data, path)
    assert ingest_csv(path) == data
