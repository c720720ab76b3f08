"""Penalised Robin Feynman-Kac solver."""

from .coefficients import ConstantField, DiagonalPolynomialField, CallableField
from .errors import (
    CalibrationBracketFailure,
    ConfigError,
    ContractViolation,
    DegenerateGeometry,
    InsufficientBoundaryGrid,
    NormalUndefined,
    PropagatedNaN,
    SolverStalled,
)
from .fd_oracle import GridFunction, solve_dirichlet_fd, solve_neumann_flux_fd, solve_robin_fd
from .feynman_kac import (
    Estimate,
    ProblemSpec,
    estimate_boundary_potential,
    estimate_dirichlet,
    estimate_resolvent,
    estimate_robin,
    estimate_robin_schedule,
    fixed_point_residual,
)
from .geometry import Ball, Box, Location
from .sde import KAPPA, PathRecord, SimParams, simulate_killed, simulate_reflected, step_reflected

__all__ = [name for name in dir() if not name.startswith("_")]
