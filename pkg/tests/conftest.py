import numpy as np
import pytest

from bregriesz.data import TREATMENT_FIRST, Dataset


@pytest.fixture
def two_unit_ate():
    """D = (1, 0), Y = (3, 1), no covariates beyond a constant column."""
    return Dataset(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([3.0, 1.0]), TREATMENT_FIRST)


@pytest.fixture
def four_unit_match():
    """Treated at z in {0, 2} with Y in {1, 3}; control at z in {0.1, 1.9} with Y in {0, 2}."""
    X = np.array([[1.0, 0.0], [1.0, 2.0], [0.0, 0.1], [0.0, 1.9]])
    return Dataset(X, np.array([1.0, 3.0, 0.0, 2.0]), TREATMENT_FIRST)


def central_diff(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    """Register a criterion outcome; printed in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
