import numpy as np
import pytest

from helpers import make_path3, make_single, make_star3, make_theta, make_triangle


@pytest.fixture
def single_edge():
    return make_single(cells=64)


@pytest.fixture
def star3():
    return make_star3(cells=32)


@pytest.fixture
def triangle():
    return make_triangle(cells=32)


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
