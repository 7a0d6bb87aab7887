"""Discrete fractional p-Laplacian on an interval: energy, eigenvalues and sign properties."""

from .eigen import EigenPair, eigens_linear, jacobi_eigh, lambda1_solve, lambda2_path
from .errors import ConfigError, ConvergenceError, DomainError, GridMismatchError, NearSingularError
from .grid import Grid1D, GridFn, build_grid, lp_norm, sign_split
from .operator import NonlocalWeights, apply_operator, build_weights, energy, rayleigh
from .scalar import FracParams, compute_K, phi_p, picone_gap
from .solver import (
    SolveOpts,
    SolveReport,
    functional_J,
    resolvent,
    solve_homotopy,
    solve_linear,
    solve_subcritical,
)

__all__ = [
    "ConfigError", "ConvergenceError", "DomainError", "EigenPair", "FracParams", "Grid1D",
    "GridFn", "GridMismatchError", "NearSingularError", "NonlocalWeights", "SolveOpts",
    "SolveReport", "apply_operator", "build_grid", "build_weights", "compute_K", "eigens_linear",
    "energy", "functional_J", "jacobi_eigh", "lambda1_solve", "lambda2_path", "lp_norm", "phi_p",
    "picone_gap", "rayleigh", "resolvent", "sign_split", "solve_homotopy", "solve_linear",
    "solve_subcritical",
]
