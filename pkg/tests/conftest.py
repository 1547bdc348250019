import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "numerics",
    deadline=None,
    max_examples=20,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("numerics")


@pytest.fixture(scope="session")
def grid16():
    from imcflab.grid import build_grid

    return build_grid(16, 32)


@pytest.fixture(scope="session")
def grid32():
    from imcflab.grid import build_grid

    return build_grid(32, 64)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
