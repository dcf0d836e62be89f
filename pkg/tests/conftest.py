import numpy as np
import pytest

from wcl import amplitudes as amp
from wcl import lattice as lt


@pytest.fixture(scope="session")
def desk_cfg():
    return lt.SimConfig(epsilon=0.1, R=4, K_tr=1, N=3, seed=7)


@pytest.fixture(scope="session")
def desk_gauges(desk_cfg):
    return amp.GaugeRecord.build(desk_cfg)


@pytest.fixture(scope="session")
def desk_draw(desk_gauges, desk_cfg):
    return lt.sample_gaussians(desk_gauges.lattice, desk_cfg.seed)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
