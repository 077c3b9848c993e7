import numpy as np
import pytest

from spatint.geometry import PointPattern, Window

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def unit():
    return Window.unit()


def random_pattern(rng, n, window=None):
    window = window or Window.unit()
    pts = window.lower + window.sides * rng.uniform(size=(n, window.dim))
    return PointPattern(pts, window)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
