import numpy as np
import pytest

from mapnav.worldsim import generate_floorplan, generate_episode


@pytest.fixture(scope="session")
def plan():
    return generate_floorplan(3)


@pytest.fixture(scope="session")
def episode(plan):
    return generate_episode(plan, 0, episode_id=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
