import numpy as np
import pytest

from irgnm.darcy import DarcyProblem
from irgnm.potential import PotentialProblem

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


@pytest.fixture(scope="session")
def potential9():
    return PotentialProblem(9)


@pytest.fixture(scope="session")
def potential17():
    return PotentialProblem(17)


@pytest.fixture(scope="session")
def potential33():
    return PotentialProblem(33)


@pytest.fixture(scope="session")
def darcy9():
    return DarcyProblem(9)


@pytest.fixture(scope="session")
def darcy17():
    return DarcyProblem(17)
