import numpy as np
import pytest

from payloadcal.friction import FrictionSpec
from payloadcal.plant import SensorSpec
from payloadcal.robot import PayloadSpec, load_robot


@pytest.fixture(scope="session")
def params():
    return load_robot()


@pytest.fixture(scope="session")
def friction():
    return FrictionSpec.default()


@pytest.fixture(scope="session")
def sensors200():
    return SensorSpec.default(rate=200.0)


@pytest.fixture(scope="session")
def quiet200():
    return SensorSpec.default(rate=200.0, noise_std=0.0)


@pytest.fixture(scope="session")
def payload_091():
    """The 0.91 kg / 75 mm centric payload used by the recovery oracles."""
    return PayloadSpec.from_mass_com(0.91, [0.0, 0.0, 0.075])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
