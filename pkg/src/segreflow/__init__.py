"""Pseudogradient-flow solver for competitive Schrodinger systems and their
segregation limits (optimal spectral partitions)."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    DegeneratePartitionError,
    EmptySupportError,
    GridMismatchError,
    InvariantError,
    SegreflowError,
)
from .grid import Field, Grid, SubdomainMask, build_grid, l2_inner, l2_norm, support_mask  # noqa: E402
from .kop import KSolveResult, State, pseudogradient, solve_K  # noqa: E402
from .linops import LinearOperator, apply, cg_solve  # noqa: E402
from .nonlin import NonlinearitySpec, check_inequalities  # noqa: E402
from .spectrum import EigResult, dirichlet_eigs, rayleigh  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "DegeneratePartitionError",
    "EmptySupportError",
    "GridMismatchError",
    "InvariantError",
    "SegreflowError",
    "Field",
    "Grid",
    "SubdomainMask",
    "build_grid",
    "l2_inner",
    "l2_norm",
    "support_mask",
    "KSolveResult",
    "State",
    "pseudogradient",
    "solve_K",
    "LinearOperator",
    "apply",
    "cg_solve",
    "NonlinearitySpec",
    "check_inequalities",
    "EigResult",
    "dirichlet_eigs",
    "rayleigh",
]
