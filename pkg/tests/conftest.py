import numpy as np
import pytest

from hrlab.grid import Grid
from hrlab.model import HrParameters


@pytest.fixture(scope="session")
def grid():
    """Desk-scale default grid: unit interval, 128 cells."""
    return Grid(1.0, 128)


@pytest.fixture(scope="session")
def params():
    """Classical bursting parameter set."""
    return HrParameters()


@pytest.fixture(scope="session")
def gentle_params():
    """Mild parameters with desk-scale constants (delta = 0.25)."""
    return HrParameters(a=0.5, b=1.0, alpha=0.1, beta=0.5, q=0.5, r=1.0,
                        c=0.0, J=0.1, d1=0.05, d2=0.05, d3=0.05)


@pytest.fixture(scope="session")
def contracting_params():
    """Unique globally stable equilibrium at the origin (verified by the
    ODE oracle in the pullback tests)."""
    return HrParameters(a=0.1, b=1.0, alpha=0.0, beta=0.5, q=0.5, r=1.0,
                        c=0.0, J=0.0, d1=0.05, d2=0.05, d3=0.05)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
