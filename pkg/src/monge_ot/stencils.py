"""Finite-difference stencils on the 9-point neighbourhood.

Every stencil is a list of ``(di, dj, weight)`` offsets with the weight
scaled by ``dx**-order``. The same table drives pointwise evaluation
(:func:`apply`), sparse rows (:func:`row`) and whole-grid sparse operators
(:func:`operator`), so all three agree by construction.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
import scipy.sparse as sp

from .grid import Grid2D

SQRT2 = np.sqrt(2.0)


class StencilError(IndexError):
    pass


class StencilKind(Enum):
    Dx1x1 = "Dx1x1"
    Dx2x2 = "Dx2x2"
    Dx1x2 = "Dx1x2"
    Dx1 = "Dx1"
    Dx2 = "Dx2"
    Dvv = "Dvv"
    Dvpvp = "Dvpvp"
    Dv = "Dv"
    Dvp = "Dvp"
    DxMinus = "DxMinus"
    DxPlus = "DxPlus"
    DyMinus = "DyMinus"
    DyPlus = "DyPlus"


# (offsets with unit weights, scale factor, derivative order)
_TABLE = {
    StencilKind.Dx1x1: ([(1, 0, 1.0), (-1, 0, 1.0), (0, 0, -2.0)], 1.0, 2),
    StencilKind.Dx2x2: ([(0, 1, 1.0), (0, -1, 1.0), (0, 0, -2.0)], 1.0, 2),
    StencilKind.Dx1x2: ([(1, 1, 1.0), (-1, -1, 1.0), (-1, 1, -1.0), (1, -1, -1.0)], 0.25, 2),
    StencilKind.Dx1: ([(1, 0, 1.0), (-1, 0, -1.0)], 0.5, 1),
    StencilKind.Dx2: ([(0, 1, 1.0), (0, -1, -1.0)], 0.5, 1),
    StencilKind.Dvv: ([(1, 1, 1.0), (-1, -1, 1.0), (0, 0, -2.0)], 0.5, 2),
    # v-perp second difference: u(i+1,j-1) + u(i-1,j+1) - 2u(i,j)
    StencilKind.Dvpvp: ([(1, -1, 1.0), (-1, 1, 1.0), (0, 0, -2.0)], 0.5, 2),
    StencilKind.Dv: ([(1, 1, 1.0), (-1, -1, -1.0)], 0.5 / SQRT2, 1),
    StencilKind.Dvp: ([(1, -1, 1.0), (-1, 1, -1.0)], 0.5 / SQRT2, 1),
    StencilKind.DxMinus: ([(0, 0, 1.0), (-1, 0, -1.0)], 1.0, 1),
    StencilKind.DxPlus: ([(1, 0, 1.0), (0, 0, -1.0)], 1.0, 1),
    StencilKind.DyMinus: ([(0, 0, 1.0), (0, -1, -1.0)], 1.0, 1),
    StencilKind.DyPlus: ([(0, 1, 1.0), (0, 0, -1.0)], 1.0, 1),
}

CENTERED = (
    StencilKind.Dx1x1,
    StencilKind.Dx2x2,
    StencilKind.Dx1x2,
    StencilKind.Dx1,
    StencilKind.Dx2,
    StencilKind.Dvv,
    StencilKind.Dvpvp,
    StencilKind.Dv,
    StencilKind.Dvp,
)
ONE_SIDED = (StencilKind.DxMinus, StencilKind.DxPlus, StencilKind.DyMinus, StencilKind.DyPlus)


def stencil(kind: StencilKind, dx: float) -> list[tuple[int, int, float]]:
    """Offsets and weights of ``kind`` for spacing ``dx``."""
    offsets, scale, order = _TABLE[kind]
    w = scale / dx**order
    return [(di, dj, c * w) for di, dj, c in offsets]


def fits(kind: StencilKind, n: int, i, j):
    """Boolean (array) telling whether the stencil at ``(i, j)`` stays on an ``n x n`` grid."""
    i, j = np.asarray(i), np.asarray(j)
    ok = np.ones(np.broadcast(i, j).shape, dtype=bool)
    for di, dj, _ in _TABLE[kind][0]:
        ok &= (i + di >= 0) & (i + di < n) & (j + dj >= 0) & (j + dj < n)
    return ok


def _check(kind, grid, i, j):
    if not (0 <= i < grid.n and 0 <= j < grid.n) or not fits(kind, grid.n, i, j):
        raise StencilError(f"{kind.value} stencil at ({i}, {j}) leaves the {grid.n}x{grid.n} grid")


def apply(kind: StencilKind, u: np.ndarray, grid: Grid2D, i: int, j: int) -> float:
    _check(kind, grid, i, j)
    return float(sum(w * u[i + di, j + dj] for di, dj, w in stencil(kind, grid.dx)))


def row(kind: StencilKind, grid: Grid2D, i: int, j: int) -> dict[int, float]:
    """Sparse row ``{flat index: coefficient}`` reproducing :func:`apply`."""
    _check(kind, grid, i, j)
    out: dict[int, float] = {}
    for di, dj, w in stencil(kind, grid.dx):
        k = int(grid.flat_index(i + di, j + dj))
        out[k] = out.get(k, 0.0) + w
    return out


def operator(kind: StencilKind, grid: Grid2D, rows: np.ndarray) -> sp.csr_matrix:
    """``n^2 x n^2`` matrix applying ``kind`` at the flat indices ``rows``.

    Rows not listed are zero. Every listed row must admit the stencil.
    """
    rows = np.asarray(rows, dtype=np.intp)
    i, j = grid.ij(rows)
    if rows.size and not np.all(fits(kind, grid.n, i, j)):
        raise StencilError(f"{kind.value} stencil leaves the grid at some requested rows")
    r, c, v = [], [], []
    for di, dj, w in stencil(kind, grid.dx):
        r.append(rows)
        c.append(grid.flat_index(i + di, j + dj))
        v.append(np.full(rows.shape, w))
    N = grid.size
    if not rows.size:
        return sp.csr_matrix((N, N))
    return sp.csr_matrix(
        (np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(N, N)
    )


def interior_field(kind: StencilKind, u: np.ndarray, dx: float) -> np.ndarray:
    """Evaluate a centred stencil at every interior point; shape ``(n-2, n-2)``."""
    n = u.shape[0]
    out = np.zeros((n - 2, n - 2))
    for di, dj, w in stencil(kind, dx):
        out += w * u[1 + di : n - 1 + di, 1 + dj : n - 1 + dj]
    return out
