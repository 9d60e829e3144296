import numpy as np
import pytest

from bclab.sampling.rng import RngStream


@pytest.fixture
def stream():
    return RngStream(20261015)


@pytest.fixture
def gen():
    return RngStream(7).generator()


def combined_z(a, sa, b, sb):
    """|a - b| in units of the combined standard error."""
    return np.abs(np.asarray(a) - np.asarray(b)) / np.sqrt(np.asarray(sa) ** 2 + np.asarray(sb) ** 2)


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail, seconds):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} ({seconds:.1f}s) {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
