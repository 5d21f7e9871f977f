import numpy as np
import pytest

from physchan.geometry import make_ula, make_upa


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def upa8():
    return make_upa(8, 8, 0.5, 1.0)


@pytest.fixture
def single():
    return make_ula(1, 0.5, 1.0)
