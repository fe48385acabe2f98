import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dirac_homog.cells import PotentialSet, solve_cells
from dirac_homog.effective import effective_tensor
from dirac_homog.interface import InterfaceModel, build_wall, edge_bands
from dirac_homog.torus import PeriodicGrid

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TRANSITION = {"V0": "4*cos(2*pi*y1)"}


@pytest.fixture(scope="session")
def grid64():
    return PeriodicGrid(64)


@pytest.fixture(scope="session")
def electric(grid64):
    return PotentialSet.from_expressions(grid64, TRANSITION)


@pytest.fixture(scope="session")
def transition_tensor(electric):
    return effective_tensor(solve_cells(electric, 1.0), -0.05)


@pytest.fixture(scope="session")
def transition_bands(transition_tensor):
    model = InterfaceModel.from_tensor(transition_tensor)
    return edge_bands(model, build_wall(-1.0, 1.0, L=30.0), steps=121, L=30.0, N=1024)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
