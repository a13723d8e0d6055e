from __future__ import annotations

import numpy as np
import pytest

from fcwq.combine import make_grid
from fcwq.simulate import Dgp, simulate

LEVELS3 = make_grid(0.025, 0.005, 3).levels


@pytest.fixture(scope="session")
def gjr_sim():
    """1500 GJR-t returns with true quantiles at the three-level grid."""
    return simulate(Dgp(length=1500, seed=11), levels=LEVELS3)


@pytest.fixture(scope="session")
def gjr_window(gjr_sim):
    return gjr_sim.series.returns[:1000]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
