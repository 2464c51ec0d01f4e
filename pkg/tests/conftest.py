import numpy as np
import pytest

from hnls_control import EquationParams, GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def kdv_params():
    return EquationParams(a=0.0, b=1.0)


@pytest.fixture
def small_grid():
    return GridSpec(3.0, 0.5, 24, 48)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
