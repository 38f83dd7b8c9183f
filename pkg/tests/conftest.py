import numpy as np
import pytest

from hiberry.lattice import Lattice


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


@pytest.fixture
def chain5() -> Lattice:
    return Lattice.chain(5)
