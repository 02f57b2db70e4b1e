import numpy as np
import pytest

from kone.density import gamma
from kone.measure import DiscreteMeasure, Window


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def square():
    return Window.cube(0.0, 4.0, 2)


@pytest.fixture
def torus():
    return Window.cube(0.0, 4.0, 2, periodic=True)


@pytest.fixture
def gamma_l():
    return gamma()


def random_measure(window, n, rng, s_lo=0.05, s_hi=3.0):
    x = window.lo_arr + rng.random((n, window.dim)) * window.lengths
    s = rng.uniform(s_lo, s_hi, n)
    return DiscreteMeasure(x, s, window)


@pytest.fixture
def make_measure(rng):
    def make(window, n, **kw):
        return random_measure(window, n, rng, **kw)
    return make
