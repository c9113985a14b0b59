"""Sparse solutions of nonlinear systems via Bregman-projection Kaczmarz methods."""

__version__ = "0.1.0"

from .convex import DualPair, SparsityPotential, bregman_distance, conjugate_value, phi_value, soft_threshold
from .problems import (
    LinearSystem,
    QuadraticSystem,
    generate_linear_sensing,
    generate_quadratic_system,
    generate_sparse_signal,
)
from .solvers import METHODS, SolveReport, SolverConfig, run_solver

__all__ = [
    "DualPair", "SparsityPotential", "bregman_distance", "conjugate_value", "phi_value", "soft_threshold",
    "LinearSystem", "QuadraticSystem", "generate_linear_sensing", "generate_quadratic_system",
    "generate_sparse_signal", "METHODS", "SolveReport", "SolverConfig", "run_solver", "__version__",
]
