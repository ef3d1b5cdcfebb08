import numpy as np
import pytest

from quivercap.instances import random_converging_datum


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def convergent_pool():
    """Shared pool of random converging instances with their scaling reports."""
    pool_rng = np.random.default_rng(777)
    return [random_converging_datum(pool_rng, size_cap=12) for _ in range(12)]
