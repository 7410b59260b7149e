import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from multimem.data import CategoricalDataset, GroupPartition
from multimem.rng import make_rng

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def small_dataset():
    """Six subjects, four variables (three levels each) in two groups."""
    codes = np.array(
        [
            [0, 1, 2, 0],
            [1, 1, 0, 2],
            [2, 0, 1, 1],
            [0, 0, 0, 0],
            [1, 2, 2, 1],
            [2, 2, 1, 2],
        ]
    )
    return CategoricalDataset(codes, np.array([3, 3, 3, 3]), ("a", "b", "c", "d"))


@pytest.fixture
def two_groups():
    return GroupPartition(np.array([0, 0, 1, 1]), 2)


@pytest.fixture
def scenario2_small():
    from multimem.simulate import ScenarioSpec, generate

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return generate(ScenarioSpec(2, n=300, seed=5))


_CRITERIA = []


@pytest.fixture
def criterion_log():
    """Record one line per acceptance criterion; printed in the terminal summary."""

    def log(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed

    return log


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
