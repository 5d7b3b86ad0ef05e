"""Stochastic heat equation on the unit cube with spatially colored noise.

Spectral Galerkin simulation together with numerical checks of moment
bounds for the stochastic convolution and of a transportation-cost
inequality for the solution law.
"""

__version__ = "0.1.0"

from .basis import GreenEvaluator, eigenfunction, green_eval, green_l2, green_mass
from .noise import HGram, SpectralMeasure, build_gram
from .solver import (CoefficientSpec, DriftSpec, SimulationConfig, Trajectory, coefficients,
                     simulate, simulate_coupled)

__all__ = [
    "CoefficientSpec", "DriftSpec", "GreenEvaluator", "HGram", "SimulationConfig",
    "SpectralMeasure", "Trajectory", "build_gram", "coefficients", "eigenfunction",
    "green_eval", "green_l2", "green_mass", "simulate", "simulate_coupled",
]
