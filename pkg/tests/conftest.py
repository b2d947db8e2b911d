import numpy as np
import pytest

from difftsp.core import Instance

# Eight-point layout with a crossing tour and its 2-opt descent.
FIG_POINTS = np.array([
    [0.1, 0.0], [0.1, 0.7], [0.3, 0.1], [0.3, 0.6],
    [0.4, 0.3], [0.4, 0.4], [0.6, 0.2], [0.6, 0.5],
])
FIG_START = [0, 1, 2, 5, 6, 7, 4, 3]
FIG_LOCAL_OPT = [0, 2, 4, 6, 7, 5, 3, 1]


@pytest.fixture
def fig_instance():
    return Instance(FIG_POINTS, id="fig")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS = {}


@pytest.fixture
def record_criterion():
    """Store a pass/fail line for the terminal summary, then return the verdict."""

    def record(number, passed, detail):
        ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
