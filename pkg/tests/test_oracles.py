from semihdp import oracles


def test_oracle_results_render():
    r = oracles._within("x", 1.0, 1.05, 0.1)
    assert r.passed and r.line().startswith("PASS x")
    assert not oracles._within("y", 1.0, 1.5, 0.1).passed


def test_quick_oracle_suite_passes():
    results = oracles.run_all(["tie", "l2"], scale=0.2)
    assert all(r.passed for rows in results.values() for r in rows)
