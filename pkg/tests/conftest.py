import numpy as np
import pytest

from lkfs.dataio import generate_synthetic


@pytest.fixture(scope="session")
def small_fixture():
    """120 samples x 30 features, 6 informative, well separated."""
    return generate_synthetic(n=120, d=30, informative=6, separation=4.0, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
