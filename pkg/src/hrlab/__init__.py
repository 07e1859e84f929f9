"""Numerical laboratory for the nonautonomous diffusive Hindmarsh-Rose system.

Simulates the three-component reaction-diffusion model with time-dependent
forcing and verifies, at desk scale, the explicit dissipativity machinery:
energy inequalities, absorbing balls, Gronwall decay, Lipschitz and smoothing
estimates, pullback attractor approximation, attraction rates, and fractal
dimension estimates.
"""

__version__ = "0.1.0"

from .grid import Grid, StateField
from .model import ForcingSpec, HrParameters
from .solver import BlowUpError, ProcessConfig, Trajectory

__all__ = [
    "Grid", "StateField", "ForcingSpec", "HrParameters",
    "BlowUpError", "ProcessConfig", "Trajectory",
    "__version__",
]
