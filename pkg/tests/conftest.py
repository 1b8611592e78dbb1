import numpy as np
import pytest

from dnnsemi.causal import CausalDataset, NuisanceEstimates


def const(value):
    return lambda X: np.full(np.asarray(X).shape[0], float(value))


@pytest.fixture
def four_rows():
    """(y, t) = (1,1), (3,1), (0,0), (2,0) with covariate x1 = 10, 20, 30, 40."""
    X = np.array([[10.0], [20.0], [30.0], [40.0]])
    return CausalDataset(X, np.array([1.0, 3.0, 0.0, 2.0]), np.array([1.0, 1.0, 0.0, 0.0]))


@pytest.fixture
def four_rows_nuis():
    return NuisanceEstimates(const(1.0), const(2.0), 0.5)


# One summary line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
