import numpy as np
import pytest

from mklrt.datasets import random_psd


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def psd_suite(rng, n, count=5):
    """Random PSD matrices of mixed rank."""
    return [random_psd(n, int(rng.integers(1, n + 1)), rng) for _ in range(count)]
