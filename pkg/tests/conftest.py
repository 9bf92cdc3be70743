import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bridgemix import ConstantBeta, DenseCovariance, SdeSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def bm_unit():
    """Standard 1D Brownian setup: beta = 1, tau = 1, Gamma = I."""
    return SdeSpec(kind="bm", beta=ConstantBeta(1.0), tau=1.0, dim=1)


def random_spd(rng, dim, scale=1.0):
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T + dim * np.eye(dim))


@pytest.fixture
def dense_sde(rng):
    """3D OU with a dense random SPD Gamma."""
    mat = random_spd(rng, 3, scale=0.3)
    return SdeSpec(
        kind="ou", alpha=-0.5, beta=ConstantBeta(1.3), tau=1.0, dim=3,
        gamma=DenseCovariance(mat),
    )
