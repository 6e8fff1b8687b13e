import numpy as np
import pytest

from formnet.controller import ControllerGains
from formnet.network import FormationSpec, GcoTrajectory, build_mesh
from formnet.phcore import SpacecraftPlantParams, spacecraft_plant

N0 = 0.5307
K0 = np.diag([30.0, 30.0, 20.0])
RBAR0 = np.diag([34.4, 42.3, 10.59])
JBAR0 = np.array([[0.0, 1.0615, 0.0], [-1.0615, 0.0, 0.0], [0.0, 0.0, 0.0]])


@pytest.fixture
def plant():
    return spacecraft_plant(SpacecraftPlantParams(N0))


@pytest.fixture
def gains():
    return ControllerGains(K0, JBAR0, RBAR0)


@pytest.fixture
def formation():
    return FormationSpec([[10.0, 0.0, 0.0], [0.0, 20.0, 0.0]], GcoTrajectory(5.0, N0))


@pytest.fixture
def mesh32():
    return build_mesh(2, [3, 2])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
