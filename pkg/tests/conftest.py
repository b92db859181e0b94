import pytest

from microgrip.config import default_materials
from microgrip.design import build_model1, build_model2
from microgrip.materials import Environment
from microgrip.physics import CoupledModel, MeshSettings, material_library

COARSE = MeshSettings(resolution=20.0, order=1)
DEFAULT = MeshSettings(resolution=10.0, order=2)


@pytest.fixture(scope="session")
def calibrated():
    return material_library(default_materials())


@pytest.fixture(scope="session")
def coarse1(calibrated):
    return CoupledModel(build_model1(), Environment(), COARSE, calibrated)


@pytest.fixture(scope="session")
def coarse2(calibrated):
    return CoupledModel(build_model2(), Environment(), COARSE, calibrated)


@pytest.fixture(scope="session")
def full1(calibrated):
    return CoupledModel(build_model1(), Environment(), DEFAULT, calibrated)


@pytest.fixture(scope="session")
def full2(calibrated):
    return CoupledModel(build_model2(), Environment(), DEFAULT, calibrated)
