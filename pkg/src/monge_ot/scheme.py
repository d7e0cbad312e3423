"""Interior Monge-Ampere residuals and their Jacobians.

Residuals use the degenerate-elliptic sign convention: every row reads

    G[u] = rho_x(x) / rho_y(grad u) + u(x0) - det2(u)

so raising a neighbouring value never raises G. ``det2`` is the 2x2
determinant surrogate of each scheme:

* axis frame:      max(a, d) max(b, d) + min(a, d) + min(b, d) with a, b the
  axis second differences and d = delta;
* diagonal frame:  the same on the diagonal second differences;
* accurate:        a b - c^2 with c the mixed difference.

The monotone residual is the larger of the two frame residuals (the
determinant surrogate is the smaller of the two). The filtered residual blends
monotone and accurate residuals through :func:`filter_value`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .density import DensityPair
from .grid import Grid2D
from .stencils import SQRT2, StencilKind as K, apply, interior_field, row, stencil

DTHETA_COMPACT = np.pi / 4


@dataclass(frozen=True)
class SchemeParams:
    delta: float
    eps: float
    dtheta: float = DTHETA_COMPACT
    x0: int = -1

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @classmethod
    def default(cls, grid: Grid2D, pair: DensityPair | None = None, delta: float | None = None,
                eps: float | None = None, dtheta: float = DTHETA_COMPACT) -> "SchemeParams":
        """delta = dx^2 and eps = sqrt(dx) + dtheta unless overridden."""
        dx = grid.dx
        delta = dx**2 if delta is None else float(delta)
        eps = np.sqrt(dx) + dtheta if eps is None else float(eps)
        if pair is not None and pair.lipschitz_k > 0 and delta <= pair.lipschitz_k * dx / SQRT2:
            warnings.warn(
                f"delta={delta:.3g} is below K*dx/sqrt(2)={pair.lipschitz_k * dx / SQRT2:.3g}; "
                "the compact scheme may lose monotonicity",
                stacklevel=2,
            )
        return cls(delta, eps, dtheta, grid.x0_index)

    def x0_of(self, grid: Grid2D) -> int:
        return grid.x0_index if self.x0 < 0 else self.x0


@dataclass(frozen=True)
class ResidualBundle:
    value: float
    active_branch: str | None = None
    filter_region: str | None = None


# -- filter ---------------------------------------------------------------


def filter_value(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.where(ax <= 1, x, np.where(ax >= 2, 0.0, np.sign(x) * 2 - x))
    return out if out.ndim else float(out)


def filter_deriv(x):
    """Derivative of the filter; 1 on ``|x| <= 1``, -1 on ``1 < |x| < 2``, else 0."""
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.where(ax <= 1, 1.0, np.where(ax < 2, -1.0, 0.0))
    return out if out.ndim else float(out)


def filter_region(x) -> str:
    ax = abs(float(x))
    if ax <= 1:
        return "inner"
    if ax < 2:
        return "descending"
    return "outer"


# -- pointwise residuals ----------------------------------------------------


def _det_frame(a, b, delta):
    return max(a, delta) * max(b, delta) + min(a, delta) + min(b, delta)


def _require_interior(grid, i, j):
    if not (0 < i < grid.n - 1 and 0 < j < grid.n - 1):
        raise ValueError(f"({i}, {j}) is not an interior point")


def _u0(u, grid, p):
    return float(u.ravel()[p.x0_of(grid)])


def _ratio(pair, i, j, p1, p2):
    F, dF = pair.ratio(np.array(pair.rho_x[i, j]), np.array([p1, p2]))
    return float(F), np.asarray(dF, dtype=float)


def _axis_gradient(u, grid, i, j):
    return apply(K.Dx1, u, grid, i, j), apply(K.Dx2, u, grid, i, j)


def _diag_gradient(u, grid, i, j):
    gv, gvp = apply(K.Dv, u, grid, i, j), apply(K.Dvp, u, grid, i, j)
    return (gv + gvp) / SQRT2, (gv - gvp) / SQRT2


def ma1(u, grid: Grid2D, i: int, j: int, pair: DensityPair, p: SchemeParams) -> float:
    """Monotone residual in the grid-axis frame."""
    _require_interior(grid, i, j)
    a, b = apply(K.Dx1x1, u, grid, i, j), apply(K.Dx2x2, u, grid, i, j)
    F, _ = _ratio(pair, i, j, *_axis_gradient(u, grid, i, j))
    return F + _u0(u, grid, p) - _det_frame(a, b, p.delta)


def ma2(u, grid: Grid2D, i: int, j: int, pair: DensityPair, p: SchemeParams) -> float:
    """Monotone residual in the diagonal frame."""
    _require_interior(grid, i, j)
    a, b = apply(K.Dvv, u, grid, i, j), apply(K.Dvpvp, u, grid, i, j)
    F, _ = _ratio(pair, i, j, *_diag_gradient(u, grid, i, j))
    return F + _u0(u, grid, p) - _det_frame(a, b, p.delta)


def monotone(u, grid: Grid2D, i: int, j: int, pair: DensityPair, p: SchemeParams) -> ResidualBundle:
    r1, r2 = ma1(u, grid, i, j, pair, p), ma2(u, grid, i, j, pair, p)
    if r2 > r1:
        return ResidualBundle(r2, "MA2")
    return ResidualBundle(r1, "MA1")


def accurate(u, grid: Grid2D, i: int, j: int, pair: DensityPair, p: SchemeParams) -> float:
    _require_interior(grid, i, j)
    a, b = apply(K.Dx1x1, u, grid, i, j), apply(K.Dx2x2, u, grid, i, j)
    c = apply(K.Dx1x2, u, grid, i, j)
    F, _ = _ratio(pair, i, j, *_axis_gradient(u, grid, i, j))
    return F + _u0(u, grid, p) - (a * b - c * c)


def filtered(u, grid: Grid2D, i: int, j: int, pair: DensityPair, p: SchemeParams) -> ResidualBundle:
    m = monotone(u, grid, i, j, pair, p)
    acc = accurate(u, grid, i, j, pair, p)
    x = (acc - m.value) / p.eps
    return ResidualBundle(m.value + p.eps * filter_value(x), m.active_branch, filter_region(x))


def _add(target: dict, src: dict, scale: float):
    for k, v in src.items():
        target[k] = target.get(k, 0.0) + scale * v


def jacobian_rows(u, grid: Grid2D, i: int, j: int, pair: DensityPair, p: SchemeParams,
                  clamp: bool = True) -> dict[int, float]:
    """Row of the filtered-scheme Jacobian at interior point ``(i, j)``.

    With ``clamp`` the accurate-scheme weight is ``max(S', 0)`` (the Newton
    matrix); without it the row is the exact a.e. derivative.
    """
    _require_interior(grid, i, j)
    d = p.delta
    x0 = p.x0_of(grid)

    def R(kind):
        return row(kind, grid, i, j)

    # axis frame
    a, b = apply(K.Dx1x1, u, grid, i, j), apply(K.Dx2x2, u, grid, i, j)
    _, dF1 = _ratio(pair, i, j, *_axis_gradient(u, grid, i, j))
    j1: dict[int, float] = {x0: 1.0}
    _add(j1, R(K.Dx1), dF1[0])
    _add(j1, R(K.Dx2), dF1[1])
    _add(j1, R(K.Dx1x1), -(max(b, d) if a >= d else 1.0))
    _add(j1, R(K.Dx2x2), -(max(a, d) if b >= d else 1.0))

    # diagonal frame
    av, bv = apply(K.Dvv, u, grid, i, j), apply(K.Dvpvp, u, grid, i, j)
    _, dF2 = _ratio(pair, i, j, *_diag_gradient(u, grid, i, j))
    j2: dict[int, float] = {x0: 1.0}
    _add(j2, R(K.Dv), (dF2[0] + dF2[1]) / SQRT2)
    _add(j2, R(K.Dvp), (dF2[0] - dF2[1]) / SQRT2)
    _add(j2, R(K.Dvv), -(max(bv, d) if av >= d else 1.0))
    _add(j2, R(K.Dvpvp), -(max(av, d) if bv >= d else 1.0))

    # accurate
    c = apply(K.Dx1x2, u, grid, i, j)
    ja: dict[int, float] = {x0: 1.0}
    _add(ja, R(K.Dx1), dF1[0])
    _add(ja, R(K.Dx2), dF1[1])
    _add(ja, R(K.Dx1x1), -b)
    _add(ja, R(K.Dx2x2), -a)
    _add(ja, R(K.Dx1x2), 2.0 * c)

    m = monotone(u, grid, i, j, pair, p)
    jm = j1 if m.active_branch == "MA1" else j2
    x = (accurate(u, grid, i, j, pair, p) - m.value) / p.eps
    s = filter_deriv(x)
    wa = max(s, 0.0) if clamp else s
    out: dict[int, float] = {}
    _add(out, jm, 1.0 - s)
    _add(out, ja, wa)
    return out


# -- whole-grid evaluation -----------------------------------------------


@dataclass
class InteriorState:
    """Residual pieces at all interior points, arrays of shape ``(n-2, n-2)``."""

    G: np.ndarray
    GM: np.ndarray
    GA: np.ndarray
    branch: np.ndarray  # 1 or 2
    x: np.ndarray  # (GA - GM) / eps
    coefs: dict | None = None


def interior_state(u: np.ndarray, grid: Grid2D, pair: DensityPair, p: SchemeParams,
                   with_jacobian: bool = True, clamp: bool = True) -> InteriorState:
    dx, d = grid.dx, p.delta
    f = lambda kind: interior_field(kind, u, dx)  # noqa: E731
    a, b, c = f(K.Dx1x1), f(K.Dx2x2), f(K.Dx1x2)
    g1, g2 = f(K.Dx1), f(K.Dx2)
    av, bv = f(K.Dvv), f(K.Dvpvp)
    gv, gvp = f(K.Dv), f(K.Dvp)
    rx = pair.rho_x[1:-1, 1:-1]
    F1, dF1 = pair.ratio(rx, np.stack([g1, g2], axis=-1))
    F2, dF2 = pair.ratio(rx, np.stack([(gv + gvp) / SQRT2, (gv - gvp) / SQRT2], axis=-1))
    u0 = u.ravel()[p.x0_of(grid)]

    def frame(s, t):
        return np.maximum(s, d) * np.maximum(t, d) + np.minimum(s, d) + np.minimum(t, d)

    G1 = F1 + u0 - frame(a, b)
    G2 = F2 + u0 - frame(av, bv)
    use2 = G2 > G1
    GM = np.where(use2, G2, G1)
    GA = F1 + u0 - (a * b - c * c)
    x = (GA - GM) / p.eps
    G = GM + p.eps * filter_value(x)
    state = InteriorState(G, GM, GA, np.where(use2, 2, 1), x)
    if not with_jacobian:
        return state

    s = filter_deriv(x)
    wm = 1.0 - s
    wa = np.maximum(s, 0.0) if clamp else s
    m1 = wm * ~use2
    m2 = wm * use2
    coefs = {
        K.Dx1: m1 * dF1[..., 0] + wa * dF1[..., 0],
        K.Dx2: m1 * dF1[..., 1] + wa * dF1[..., 1],
        K.Dx1x1: -m1 * np.where(a >= d, np.maximum(b, d), 1.0) - wa * b,
        K.Dx2x2: -m1 * np.where(b >= d, np.maximum(a, d), 1.0) - wa * a,
        K.Dx1x2: 2.0 * wa * c,
        K.Dv: m2 * (dF2[..., 0] + dF2[..., 1]) / SQRT2,
        K.Dvp: m2 * (dF2[..., 0] - dF2[..., 1]) / SQRT2,
        K.Dvv: -m2 * np.where(av >= d, np.maximum(bv, d), 1.0),
        K.Dvpvp: -m2 * np.where(bv >= d, np.maximum(av, d), 1.0),
        "x0": wm + wa,
    }
    state.coefs = coefs
    return state


def assemble_rows(grid: Grid2D, rows: np.ndarray, coefs: dict, x0: int | None = None):
    """COO triplets of ``sum_kind diag(coef) @ stencil_kind`` on ``rows``.

    ``coefs`` maps stencil kinds to arrays aligned with ``rows``; the
    optional key ``"x0"`` adds a column at flat index ``x0``.
    """
    rows = np.asarray(rows, dtype=np.intp)
    i, j = grid.ij(rows)
    R, C, V = [], [], []
    for kind, coef in coefs.items():
        if kind == "x0":
            R.append(rows)
            C.append(np.full(rows.shape, x0, dtype=np.intp))
            V.append(np.broadcast_to(np.asarray(coef, float).ravel(), rows.shape))
            continue
        cv = np.broadcast_to(np.asarray(coef, float).ravel(), rows.shape)
        nz = cv != 0
        if not nz.any():
            continue
        for di, dj, w in stencil(kind, grid.dx):
            R.append(rows[nz])
            C.append(grid.flat_index(i[nz] + di, j[nz] + dj))
            V.append(w * cv[nz])
    if not R:
        return np.empty(0, np.intp), np.empty(0, np.intp), np.empty(0)
    return np.concatenate(R), np.concatenate(C), np.concatenate(V)


def diagonal_rows(grid: Grid2D, rows: np.ndarray, coefs: dict, x0: int | None = None) -> np.ndarray:
    """Diagonal of the matrix :func:`assemble_rows` would build, as a full-length vector."""
    rows = np.asarray(rows, dtype=np.intp)
    d = np.zeros(grid.size)
    for kind, coef in coefs.items():
        cv = np.broadcast_to(np.asarray(coef, float).ravel(), rows.shape)
        if kind == "x0":
            d[rows[rows == x0]] += cv[rows == x0]
            continue
        centre = sum(w for di, dj, w in stencil(kind, grid.dx) if di == 0 and dj == 0)
        if centre:
            d[rows] += centre * cv
    return d


def interior_jacobian(grid: Grid2D, state: InteriorState, p: SchemeParams) -> sp.csr_matrix:
    r, c, v = assemble_rows(grid, grid.interior_indices(), state.coefs, p.x0_of(grid))
    return sp.csr_matrix((v, (r, c)), shape=(grid.size, grid.size))
