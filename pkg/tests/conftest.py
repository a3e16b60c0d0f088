import random

import pytest

from neurevo.datasets import make_synthetic
from neurevo.primitives import build_primitive_set


@pytest.fixture(scope="session")
def pset():
    return build_primitive_set()


@pytest.fixture(scope="session")
def blobs_small():
    return make_synthetic("blobs", n=120, seed=3)


@pytest.fixture()
def rng():
    return random.Random(12345)
