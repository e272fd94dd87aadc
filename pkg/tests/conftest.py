import math

import numpy as np
import pytest

from finsler import models
from finsler.causal import Observer
from finsler.geodesic import GeodesicIVP, integrate
from finsler.tolerances import DEFAULT

HALF_PI = 0.5 * math.pi


@pytest.fixture
def tol():
    return DEFAULT


@pytest.fixture(scope='session')
def minkowski():
    return models.minkowski(4)


@pytest.fixture(scope='session')
def schwarzschild():
    return models.schwarzschild(1.0)


@pytest.fixture(scope='session')
def sphere():
    return models.product_sphere(1.0)


@pytest.fixture
def static_observer():
    return Observer.static([1.0, 0.0, 0.0])


def equator_geodesic(sphere, arc: float):
    """Timelike geodesic of R x S^2 along the equator with spatial arc `arc` over s in [0, 1]."""
    a = math.sqrt(1.0 + arc * arc)
    return integrate(GeodesicIVP(sphere, np.array([0.0, HALF_PI, 0.0]), np.array([a, 0.0, arc])))
