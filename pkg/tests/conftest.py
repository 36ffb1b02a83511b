import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ezquant import DenseMatrix

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def planted_matrix(rng, rows, cols, ratio=0.005, lo=10.0, hi=50.0):
    """Unit Gaussian with a fraction of entries replaced by +-[lo, hi] sigma spikes."""
    W = rng.standard_normal((rows, cols))
    n = int(round(ratio * W.size))
    idx = rng.choice(W.size, size=n, replace=False)
    W.flat[idx] = rng.uniform(lo, hi, n) * rng.choice([-1.0, 1.0], n)
    return DenseMatrix(W), np.sort(idx)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
