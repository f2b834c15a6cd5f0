import numpy as np
import pytest

from semihdp.state import Dataset, HyperParams


@pytest.fixture
def small_data():
    rng = np.random.default_rng(123)
    return Dataset([rng.normal(0, 1, 8), rng.normal(3, 1, 6), rng.normal(0, 1, 7)])


@pytest.fixture
def small_hyper(small_data):
    return HyperParams(small_data.n_groups)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
