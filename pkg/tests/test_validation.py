import numpy as np
import pytest
import sympy as sy
from hypothesis import given, settings, strategies as st

from monge_ot.grid import build_grid
from monge_ot.validation import (
    d2q,
    dq,
    ellipse_angle,
    exact_ellipse_map,
    exact_split_map,
    exact_square_map,
    inverse_consistency,
    legendre_transform,
    map_error,
    pogorelov_cells,
    pogorelov_potential,
    q,
    square_source_density,
    transport_map,
)

MX = np.diag([0.8, 0.4])
MY = np.array([[0.6, 0.2], [0.2, 0.8]])


# -- square problem --------------------------------------------------------------


@pytest.fixture(scope="module")
def symbolic_q():
    z = sy.symbols("z")
    pi = sy.pi
    expr = (-(z**2) / (8 * pi) + 1 / (256 * pi**3) + 1 / (32 * pi)) * sy.cos(8 * pi * z) + z * sy.sin(8 * pi * z) / (
        32 * pi**2
    )
    return [sy.lambdify(z, e, "numpy") for e in (expr, sy.diff(expr, z), sy.diff(expr, z, 2))]


def test_q_derivatives_against_symbolic(symbolic_q, rng):
    z = rng.uniform(-0.5, 0.5, 500)
    f, f1, f2 = symbolic_q
    assert q(z) == pytest.approx(f(z), abs=1e-14)
    assert dq(z) == pytest.approx(f1(z), abs=1e-13)
    assert d2q(z) == pytest.approx(f2(z), abs=1e-12)


def test_square_density_is_jacobian_determinant(rng):
    x = rng.uniform(-0.5, 0.5, size=(1000, 2))
    h = 1e-6
    J = np.empty((len(x), 2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        J[:, :, k] = (exact_square_map(x + e) - exact_square_map(x - e)) / (2 * h)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    assert square_source_density(x) == pytest.approx(det, abs=1e-7)
    # analytic Jacobian of the product-form map
    a, b = x[:, 0], x[:, 1]
    exact = (1 + 4 * d2q(a) * q(b)) * (1 + 4 * q(a) * d2q(b)) - 16 * dq(a) ** 2 * dq(b) ** 2
    assert square_source_density(x) == pytest.approx(exact, abs=1e-12)


def test_square_density_has_unit_mass():
    n = 2000
    c = -0.5 + (np.arange(n) + 0.5) / n
    X1, X2 = np.meshgrid(c, c, indexing="ij")
    mass = square_source_density(np.stack([X1, X2], axis=-1)).mean()
    assert mass == pytest.approx(1.0, abs=1e-4)
    assert square_source_density(np.zeros(2)) == pytest.approx(1 + 8 * d2q(0.0) * q(0.0) + 16 * q(0.0) ** 2 * d2q(0.0) ** 2)


def test_square_map_symmetry_and_containment(rng):
    assert exact_square_map(np.zeros(2)) == pytest.approx(np.zeros(2))
    x = rng.uniform(-0.5, 0.5, size=(100, 2))
    assert exact_square_map(-x) == pytest.approx(-exact_square_map(x))
    c = np.linspace(-0.5, 0.5, 101)
    X = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
    y = exact_square_map(X)
    assert np.all(np.abs(y) <= 0.5 + 1e-12)


# -- ellipse problem -------------------------------------------------------------


def test_ellipse_identity():
    assert ellipse_angle(np.eye(2), np.eye(2)) == 0.0
    x = np.array([[0.3, -0.1], [0.0, 0.7]])
    assert exact_ellipse_map(np.eye(2), np.eye(2), x) == pytest.approx(x)


@pytest.mark.parametrize("Mx, My", [(MX, MY), (MY, MY), (np.diag([0.5, 0.9]), np.diag([0.5, 0.9]))])
def test_ellipse_boundary_image(Mx, My):
    t = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    circle = np.column_stack([np.cos(t), np.sin(t)])
    img = exact_ellipse_map(Mx, My, circle @ Mx.T)
    back = img @ np.linalg.inv(My).T
    assert np.linalg.norm(back, axis=1) == pytest.approx(np.ones(360), abs=1e-10)


def test_ellipse_map_is_gradient_of_convex_potential():
    A = exact_ellipse_map(MX, MY, np.eye(2)).T
    assert A == pytest.approx(A.T, abs=1e-12)
    assert np.all(np.linalg.eigvalsh(A) > 0)


def test_split_map_translates_halves():
    x = np.array([[-0.5, 0.2], [0.4, -0.3]])
    assert exact_split_map(x) == pytest.approx(np.array([[-0.3, 0.2], [0.3, -0.3]]))


# -- errors and maps -------------------------------------------------------------


def test_map_error_basic():
    grid = build_grid(11)
    X1, X2 = grid.mesh()
    ident = lambda p: p  # noqa: E731
    assert map_error((X1, X2), ident, grid) == (0.0, 0.0)
    mx, l2 = map_error((X1 + 0.01, X2), ident, grid)
    assert mx == pytest.approx(0.01) and l2 == pytest.approx(0.01)
    mask = np.zeros(grid.shape, bool)
    mask[3, 4] = True
    bumped = X1.copy()
    bumped[3, 4] += 0.5
    bumped[0, 0] += 9.0
    assert map_error((bumped, X2), ident, grid, mask)[0] == pytest.approx(0.5)


def test_transport_map_of_quadratic():
    grid = build_grid(9)
    X1, X2 = grid.mesh()
    m1, m2 = transport_map(0.5 * (X1**2 + X2**2), grid)
    assert m1[1:-1] == pytest.approx(X1[1:-1])
    assert m2[:, 1:-1] == pytest.approx(X2[:, 1:-1])


# -- Legendre transform ----------------------------------------------------------


def test_legendre_of_quadratic():
    grid = build_grid(9, (-1.0, 1.0))
    X1, X2 = grid.mesh()
    ys = grid.points()[[10, 40, 57]]
    assert legendre_transform(0.5 * (X1**2 + X2**2), grid, ys) == pytest.approx(0.5 * np.sum(ys**2, axis=1))


def test_legendre_of_zero():
    grid = build_grid(9, (-1.0, 1.0))
    assert legendre_transform(np.zeros(grid.shape), grid, [[1.0, 0.0]]) == pytest.approx([1.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_legendre_against_double_loop(seed):
    rng = np.random.default_rng(seed)
    grid = build_grid(9, (-1.0, 1.0))
    u = rng.normal(size=grid.shape)
    ys = rng.uniform(-2, 2, size=(5, 2))
    expect = []
    for y in ys:
        best = -np.inf
        for i in range(grid.n):
            for j in range(grid.n):
                x = grid.point(i, j)
                best = max(best, x[0] * y[0] + x[1] * y[1] - u[i, j])
        expect.append(best)
    assert legendre_transform(u, grid, ys, chunk=2) == pytest.approx(expect)


def test_legendre_reverses_order(rng):
    grid = build_grid(9, (-1.0, 1.0))
    u = rng.normal(size=grid.shape)
    ys = rng.uniform(-1, 1, size=(10, 2))
    assert np.all(legendre_transform(u + np.abs(rng.normal(size=grid.shape)), grid, ys) <= legendre_transform(u, grid, ys))


# -- Pogorelov cells -------------------------------------------------------------


def test_single_dirac_cell_is_whole_support():
    grid = build_grid(65, (-1.0, 1.0))
    X1, X2 = grid.mesh()
    mask = X1**2 + X2**2 <= 1.0
    res = pogorelov_cells(np.zeros(1), grid, [[0.1, 0.2]], [np.pi], mask)
    assert res.n_cells == 1
    assert res.cell_areas[0] == pytest.approx(mask.sum() * grid.dx**2)
    assert res.linf_error < 2.0  # disc quadrature error only


def test_symmetric_diracs_split_evenly():
    grid = build_grid(64, (-1.0, 1.0))
    X1, X2 = grid.mesh()
    mask = X1**2 + X2**2 <= 1.0
    ys = [[-0.3, 0.0], [0.3, 0.0]]
    res = pogorelov_cells(np.zeros(2), grid, ys, [np.pi / 2] * 2, mask)
    assert res.n_cells == 2
    assert res.cell_areas[0] == pytest.approx(res.cell_areas[1])
    assert set(np.unique(res.labels)) == {-1, 0, 1}


def test_pogorelov_potential_is_max_of_planes():
    ys = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    v = np.array([0.0, 0.5, 0.5])
    val, lab = pogorelov_potential(np.array([[0.0, 0.0], [1.0, 0.1], [0.6, 0.6]]), ys, v)
    assert val == pytest.approx([0.0, 0.5, 0.1])
    assert list(lab) == [0, 1, 1]


# -- inverse consistency ---------------------------------------------------------


def test_inverse_consistency_identity():
    grid = build_grid(33, (-1.0, 1.0))
    X1, X2 = grid.mesh()
    u = 0.5 * (X1**2 + X2**2)
    # boundary gradients are one-sided, hence first-order; interior ones are exact here
    assert inverse_consistency(u, u, grid, grid, mask=grid.interior_mask()) < 1e-12
    assert 0 < inverse_consistency(u, u, grid, grid) <= 2 * grid.dx


def test_inverse_consistency_affine_pair():
    A = np.array([[0.8, 0.1], [0.1, 0.5]])
    Ai = np.linalg.inv(A)
    errs = []
    for n in (33, 65):
        gf = build_grid(n, (-1.0, 1.0))
        gi = build_grid(n, (-0.4, 0.4))
        X1, X2 = gf.mesh()
        uf = 0.5 * (Ai[0, 0] * X1**2 + 2 * Ai[0, 1] * X1 * X2 + Ai[1, 1] * X2**2)
        Y1, Y2 = gi.mesh()
        ui = 0.5 * (A[0, 0] * Y1**2 + 2 * A[0, 1] * Y1 * Y2 + A[1, 1] * Y2**2)
        errs.append(inverse_consistency(uf, ui, gf, gi))
        assert inverse_consistency(uf, ui, gf, gi, mask=gi.interior_mask()) < 1e-12
    # the remaining error comes from one-sided gradients on the inverse grid's edge
    assert errs[1] == pytest.approx(errs[0] / 2, rel=0.05)
