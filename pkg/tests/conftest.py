import numpy as np
import pytest

from otfs_fss.core import DDGridConfig
from otfs_fss.pulses import RolloffFilter


@pytest.fixture
def small_grid():
    return DDGridConfig(N=8, M=16, G=2)


@pytest.fixture
def filt():
    return RolloffFilter()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
