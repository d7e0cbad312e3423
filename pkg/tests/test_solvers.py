import numpy as np
import pytest
import scipy.sparse as sp

from conftest import identity_problem
from monge_ot.experiments import build
from monge_ot.grid import build_grid
from monge_ot.solvers import (
    InstabilityError,
    LinearSolveError,
    SolverConfig,
    euler_solve,
    initialize,
    linear_solve,
    newton_solve,
    projection_solve,
    solve,
)
from monge_ot.target import RequiresPolygonError, build_target, ellipse_points, square_points
from monge_ot.validation import transport_map


def grad(u, grid):
    return np.stack(transport_map(u, grid))


# -- initial iterate ------------------------------------------------------------


def test_initialize_identity():
    grid = build_grid(9)
    shape = build_target(square_points(-0.5, 0.5), 16, ordered=True)
    X1, X2 = grid.mesh()
    assert initialize(grid, shape) == pytest.approx(0.5 * (X1**2 + X2**2))


def test_initialize_translate():
    grid = build_grid(9)
    t = np.array([0.3, -0.2])
    shape = build_target(square_points(-0.5, 0.5) + t, 16, ordered=True)
    X1, X2 = grid.mesh()
    assert initialize(grid, shape) == pytest.approx(0.5 * (X1**2 + X2**2) + t[0] * X1 + t[1] * X2)


def test_initialize_maps_box_corners_onto_target_box():
    grid = build_grid(17)
    shape = build_target(ellipse_points(np.array([[0.3, 0.1], [0.1, 0.2]]), m=256), 16, ordered=True)
    u = initialize(grid, shape)
    lo, hi = shape.bbox
    # the gradient is affine per axis: x1 -> s1 (x1 - c1) + b1
    du1 = np.gradient(u, grid.dx, axis=0, edge_order=2)
    du2 = np.gradient(u, grid.dx, axis=1, edge_order=2)
    assert du1[0, 0] == pytest.approx(lo[0]) and du1[-1, 0] == pytest.approx(hi[0])
    assert du2[0, 0] == pytest.approx(lo[1]) and du2[0, -1] == pytest.approx(hi[1])


# -- linear algebra ---------------------------------------------------------------


def test_linear_solve_identity(rng):
    b = rng.normal(size=12)
    assert linear_solve(sp.identity(12), b) == pytest.approx(b)


def test_linear_solve_laplacian(rng):
    n = 200
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    x = rng.normal(size=n)
    assert np.abs(linear_solve(A, A @ x) - x).max() < 1e-10


def test_linear_solve_singular():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 0.0]]))
    with pytest.raises(LinearSolveError):
        linear_solve(A, np.ones(2))


# -- Newton -----------------------------------------------------------------------


def test_identity_problem_newton():
    prob = identity_problem(9)
    u0 = initialize(prob.grid, prob.shape)
    start = prob.system(u0, with_jacobian=False).norm
    assert start <= 10 * (prob.params.delta + prob.grid.dx)
    u, rep = newton_solve(SolverConfig(tol=1e-10), prob)
    assert rep.converged and rep.iterations <= 2


def test_newton_residuals_strictly_decrease():
    e = build("square", 24)
    _, rep = newton_solve(SolverConfig(tol=1e-9), e.problem)
    h = rep.residual_history
    assert rep.converged
    assert all(b < a for a, b in zip(h, h[1:]))
    assert all(0 < a <= 1 for a in rep.damping)


def test_solve_records_fallback_iterations():
    e = build("ellipse", 32, n_dirs=32)
    u, rep = solve(SolverConfig(tol=1e-8), e.problem)
    assert rep.converged
    if "direct_attempt_iterations" in rep.extra:
        stages = sum(s["iterations"] or 0 for s in rep.extra["continuation"])
        assert rep.iterations == stages + rep.extra["direct_attempt_iterations"]


# -- explicit iteration -----------------------------------------------------------


def test_euler_matches_newton_on_identity():
    prob = identity_problem(9)
    un, _ = newton_solve(SolverConfig(tol=1e-11), prob)
    ue, rep = euler_solve(SolverConfig("euler", tol=5e-7), prob)
    assert rep.converged
    assert np.abs(ue - un).max() <= 1e-5
    assert rep.iterations > 100


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_euler_unstable_step():
    prob = identity_problem(9)
    with pytest.raises(InstabilityError):
        euler_solve(SolverConfig("euler", euler_dt=0.5, max_iter=5000), prob)


def test_euler_zero_residual_start():
    prob = identity_problem(9)
    un, _ = newton_solve(SolverConfig(tol=1e-12), prob)
    _, rep = euler_solve(SolverConfig("euler", tol=1e-9), prob, un)
    assert rep.iterations == 0 and rep.converged


# -- projection -------------------------------------------------------------------


def test_projection_fixed_point():
    prob = identity_problem(9)
    un, _ = newton_solve(SolverConfig(tol=1e-12), prob)
    u, rep = projection_solve(SolverConfig("projection", tol=1e-9), prob, un)
    assert rep.converged
    assert np.abs(grad(u, prob.grid) - grad(un, prob.grid)).max() < 1e-6


def test_projection_agrees_with_newton_on_square():
    e = build("square", 32)
    un, _ = solve(SolverConfig(tol=1e-8), e.problem)
    up, rep = projection_solve(SolverConfig("projection", tol=1e-8), e.problem)
    assert rep.converged
    assert np.abs(grad(up, e.problem.grid) - grad(un, e.problem.grid)).max() <= 2 * 0.0220


def test_projection_needs_polygon():
    prob = identity_problem(9)
    shape = build_target(square_points(-0.5, 0.5), 16, as_polygon=False)
    from monge_ot.problem import OTProblem

    with pytest.raises(RequiresPolygonError):
        projection_solve(SolverConfig("projection"), OTProblem(prob.grid, prob.pair, shape, prob.params))


# -- configuration ----------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"method": "gauss"},
        {"alpha_min": 0.0},
        {"alpha_min": 2.0},
        {"tol": -1.0},
        {"globalization": "homotopy"},
        {"continuation_ratio": 1.0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_iteration_limits():
    assert SolverConfig().iteration_limit == 50
    assert SolverConfig("euler").iteration_limit > 10_000
    assert SolverConfig("projection", max_iter=3).iteration_limit == 3
