import numpy as np
import pytest

from hamstab.fields import ScalarField
from hamstab.orbits import find_periodic_orbit
from hamstab.systems import harmonic2d, rikitake


@pytest.fixture(scope="session")
def rik():
    return rikitake(1.0)


@pytest.fixture(scope="session")
def rik_orbit(rik):
    return find_periodic_orbit(rik, -1.0, 2.0, [1.0, 1.0, 1.0])


@pytest.fixture(scope="session")
def circle_orbit():
    return find_periodic_orbit(harmonic2d().embedded(), 0.5, 0.0, [1.0, 0.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def const(v, dim=3):
    return ScalarField.constant(v, dim=dim)
