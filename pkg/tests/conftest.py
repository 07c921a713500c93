import numpy as np
import pytest

from blindcal.config import load_config
from blindcal.netgraph import WeightedDigraph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_node():
    return WeightedDigraph(np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.fixture(scope="session")
def noiseless_cfg():
    return load_config(preset="noiseless").sim


@pytest.fixture(scope="session")
def lossy_cfg():
    return load_config(preset="lossy-iv-d1").sim
