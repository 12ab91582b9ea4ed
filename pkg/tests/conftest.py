import numpy as np
import pytest

from h2delay.random_instances import random_plant
from h2delay.topology import DiGraph


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture
def chain3():
    """Three agents in a chain with a moderate delay."""
    return random_plant(np.random.default_rng(3), 3, graph=DiGraph(3, ((1, 2), (2, 3))), tau=0.25)


@pytest.fixture
def pair():
    """Two stable agents, ``1 -> 2``, scalar dimensions."""
    return random_plant(np.random.default_rng(11), 2, n_sizes=(1,), m_sizes=(1,), p_sizes=(1,),
                        graph=DiGraph(2, ((1, 2),)), tau=0.2, stable=True)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k.split("-")[1])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
