"""Finite-difference solver for the optimal transport Monge-Ampere problem."""

from .boundary import assemble
from .density import ConstantDensity, DensityPair, GaussianDensity, make_pair
from .grid import Grid2D, build_grid
from .problem import OTProblem
from .scheme import SchemeParams
from .solvers import SolverConfig, SolveReport, newton_solve, euler_solve, projection_solve, solve
from .target import TargetShape, build_target
from .validation import transport_map

__version__ = "0.1.0"

__all__ = [
    "ConstantDensity", "DensityPair", "GaussianDensity", "Grid2D", "OTProblem", "SchemeParams",
    "SolveReport", "SolverConfig", "TargetShape", "assemble", "build_grid", "build_target",
    "euler_solve", "make_pair", "newton_solve", "projection_solve", "solve", "transport_map",
    "__version__",
]
