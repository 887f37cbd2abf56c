import numpy as np
import pytest

from mdiqss import _backend


@pytest.fixture(params=_backend.available())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def within_sigma(k: int, n: int, p: float, nsigma: float = 3.0) -> bool:
    """Binomial count k of n trials is within nsigma of mean n p."""
    sd = np.sqrt(n * p * (1 - p))
    return abs(k - n * p) <= nsigma * max(sd, 1e-12)
