import numpy as np
import pytest

from monge_ot.density import ConstantDensity, make_pair, sample_source, square_mask
from monge_ot.grid import build_grid
from monge_ot.problem import OTProblem
from monge_ot.scheme import SchemeParams
from monge_ot.target import build_target, square_points


def identity_problem(n: int = 9, n_dirs: int = 16, bounds=(-0.5, 0.5)) -> OTProblem:
    """Uniform density on a square carried onto the same square."""
    grid = build_grid(n, bounds)
    lo, hi = bounds
    shape = build_target(square_points(lo, hi), n_dirs, ordered=True)
    rho_x = sample_source(ConstantDensity(1.0), square_mask(lo, hi), grid)
    pair = make_pair(rho_x, ConstantDensity(1.0), shape, grid)
    return OTProblem(grid, pair, shape, SchemeParams.default(grid, pair))


def unit_pair(grid, value: float = 1.0):
    """Density pair with rho_x / rho_y identically ``value`` (no normalisation)."""
    shape = build_target(square_points(grid.lo, grid.hi), 8, ordered=True)
    rho_x = np.full(grid.shape, float(value))
    return make_pair(rho_x, ConstantDensity(1.0), shape, grid, normalize=False), shape


def random_convex(grid, rng, scale: float = 1.0) -> np.ndarray:
    """Random strictly convex quadratic plus a small smooth perturbation."""
    X1, X2 = grid.mesh()
    A = rng.normal(size=(2, 2))
    A = A @ A.T + 0.5 * np.eye(2)
    b = rng.normal(size=2)
    k = rng.uniform(1.0, 3.0, size=2)
    u = 0.5 * (A[0, 0] * X1**2 + 2 * A[0, 1] * X1 * X2 + A[1, 1] * X2**2) + b[0] * X1 + b[1] * X2
    return scale * (u + 0.01 * np.sin(k[0] * X1) * np.cos(k[1] * X2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
