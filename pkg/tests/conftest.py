import numpy as np
import pytest

import recurlab as rl


@pytest.fixture(scope="session")
def doubling():
    return rl.make_map("doubling")


@pytest.fixture(scope="session")
def beta_golden():
    return rl.make_map("beta")


@pytest.fixture(scope="session")
def cusp():
    return rl.make_map("cusp")


@pytest.fixture(scope="session")
def gauss():
    return rl.make_map("gauss")


@pytest.fixture(scope="session")
def logistic():
    return rl.make_map("logistic")


@pytest.fixture(scope="session")
def mp_quarter():
    return rl.make_map("mp", gamma=0.25)


class FixedUniform:
    """Stub generator whose next uniform draw is prescribed."""

    def __init__(self, *values):
        self.values = list(values)

    def random(self, size=None):
        v = self.values.pop(0)
        if size is None:
            return v
        return np.full(size, v)

    def integers(self, low, high, size=None, dtype=None):
        # only used for fixed-point uniforms; derive from the same value
        v = self.values[0]
        words = np.zeros(size, dtype=np.uint64)
        x = v
        for i in range(size):
            x *= 2**64
            w = int(x)
            words[i] = w
            x -= w
        self.values.pop(0)
        return words


@pytest.fixture
def fixed_uniform():
    return FixedUniform
