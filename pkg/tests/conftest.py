import math

import numpy as np
import pytest

from vplk.grid import SpatialGrid, build_velocity_grid
from vplk.landau import LandauOperator


@pytest.fixture(scope="session")
def vg8():
    return build_velocity_grid(8, 4.0)


@pytest.fixture(scope="session")
def vg16():
    return build_velocity_grid(16, 6.0)


@pytest.fixture(scope="session")
def op8(vg8):
    return LandauOperator(vg8)


@pytest.fixture(scope="session")
def op16(vg16):
    return LandauOperator(vg16)


@pytest.fixture(scope="session")
def xg16():
    return SpatialGrid(1, 16, 4.0 * math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
