from pathlib import Path

import numpy as np
import pytest

from nullmanifold import storage
from nullmanifold.models import TraversalParams
from nullmanifold.services.sampling import gauss_newton_solve, newton_traverse
from nullmanifold.services.task import TaskInstance

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running sampling or benchmark runs")


@pytest.fixture(scope="session")
def planar_chain():
    return storage.load_robot(DATA_DIR / "robots" / "planar3.json")


@pytest.fixture(scope="session")
def panda_chain():
    return storage.load_robot(DATA_DIR / "robots" / "panda.json")


@pytest.fixture(scope="session")
def planar_task(planar_chain):
    # unit 3-link arm reaching (1.5, 0.5): a single closed self-motion loop
    return TaskInstance(planar_chain, "planar_position", [1.5, 0.5])


@pytest.fixture(scope="session")
def planar_start(planar_task, planar_chain):
    return gauss_newton_solve(planar_task, planar_chain.ready, eps=1e-10)


@pytest.fixture(scope="session")
def planar_loop(planar_task, planar_start):
    return newton_traverse(planar_task, planar_start, TraversalParams(beta=0.5))
