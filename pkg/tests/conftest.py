import numpy as np
import pytest

from roughwall.boundary_layer import BLSettings, solve_bl
from roughwall.roughness import RoughnessSpec, periodic_pair, sample_boundary
from roughwall.stokes import PhysicalParams


@pytest.fixture(scope="session")
def periodic_spec():
    """Single-mode sinusoid F(y) = 0.5 + 0.2 sin(2 pi y)."""
    return RoughnessSpec(kind="shifted-periodic", mode_count=1, amplitude=0.2)


@pytest.fixture(scope="session")
def fourier_spec():
    return RoughnessSpec(kind="truncated-fourier", mode_count=8, amplitude=0.2)


@pytest.fixture(scope="session")
def flat_half():
    return sample_boundary(RoughnessSpec(kind="flat-offset", amplitude=0.5), 0)


@pytest.fixture(scope="session")
def flat_bl(flat_half):
    """Flat wall at depth 0.5, phi = 1."""
    s = BLSettings(R_bl=1.0, L=10.0, target_h=0.125)
    return solve_bl(flat_half, "lower", PhysicalParams(flux=1.0), s)


@pytest.fixture(scope="session")
def periodic_bls(periodic_spec):
    """Lower and upper cell solutions of one periodic realization (phi = 0.1)."""
    b = periodic_pair(periodic_spec, 0.3, seed=1)
    s = BLSettings(R_bl=0.5, L=8.0, target_h=0.125)
    p = PhysicalParams(flux=0.1)
    return solve_bl(b, "lower", p, s), solve_bl(b, "upper", p, s)


def rng(seed=0):
    return np.random.default_rng(seed)
