import numpy as np
import pytest

from finslerconn.metrics import zoo


@pytest.fixture(scope="session")
def zoo2():
    return zoo(2)


@pytest.fixture(scope="session")
def zoo3():
    return zoo(3)


def sample(m, count, seed, shrink=1.0):
    rng = np.random.default_rng(seed)
    return [m.sample_point(rng, shrink) for _ in range(count)]


def maxabs(a):
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
