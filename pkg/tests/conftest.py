import numpy as np
import pytest

from extinv.extended import make_penalty
from extinv.forward import Geometry, apply_forward
from extinv.traces import AnalyticWavelet, build_grid

R = 1.0
M_STAR = 0.4
MU = 0.05


def default_geometry(n=4001, lambda_max=0.5):
    return Geometry(R, 0.125, 0.6, lambda_max, build_grid(-0.5, 1.5, n))


@pytest.fixture(scope="session")
def geom():
    return default_geometry()


@pytest.fixture(scope="session")
def w_star():
    return AnalyticWavelet("bump", MU)


@pytest.fixture(scope="session")
def d_clean(geom, w_star):
    return apply_forward(M_STAR, w_star, geom)


@pytest.fixture
def penalty(geom):
    return lambda alpha: make_penalty(geom, alpha)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
