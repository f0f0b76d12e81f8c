import numpy as np
import pytest

from halfplane_ac.potential import equilateral_wells, make_product_potential


@pytest.fixture(scope="session")
def triple_well():
    return make_product_potential(equilateral_wells())


@pytest.fixture(scope="session")
def soft_triple_well():
    return make_product_potential(equilateral_wells(), scale=1.0 / 9.0)


@pytest.fixture(scope="session")
def two_well():
    return make_product_potential([[1.0, 0.0], [-1.0, 0.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
