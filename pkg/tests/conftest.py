import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200, derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Gradient entries smaller than this sit at central-difference roundoff level.
FD_FLOOR = 1e-6


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_instance(rng, n, x_range=(0.0, 20.0)):
    """Log-uniform parameters in [e^-2, e^2] plus a random 1-D dataset."""
    from drivershare.gp import Dataset, HyperParams

    z = rng.uniform(-2.0, 2.0, 3)
    X = rng.uniform(*x_range, n)
    y = rng.normal(0.0, 2.0, n)
    return HyperParams.from_log(z), Dataset(X, y)
