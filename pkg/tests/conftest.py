import math

import numpy as np
import pytest

from uneqot import CostModel, SourceMeasure

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def quarter():
    return CostModel("bilinear_arc"), SourceMeasure("quarter_disk")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture(scope="session")
def arc_interval():
    return (0.0, 0.5 * math.pi)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
