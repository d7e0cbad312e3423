"""Upwind Hamilton-Jacobi boundary rows and assembly of the global system."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .density import DensityPair
from .grid import Grid2D, PointClass, classify
from .scheme import SchemeParams, assemble_rows, diagonal_rows, interior_state
from .stencils import ONE_SIDED, StencilKind as K, apply, row
from .target import TargetShape, admissible_directions


class ConfigurationError(ValueError):
    pass


def one_sided(u: np.ndarray, grid: Grid2D, idx: np.ndarray) -> dict:
    """One-sided differences at flat indices ``idx``; zero where a stencil leaves the grid."""
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    idx = np.asarray(idx)
    return {kind: full.ravel()[idx] for kind, full in _one_sided_fields(u, grid.dx).items()}


def _one_sided_fields(u: np.ndarray, dx: float) -> dict:
    fwd1 = np.zeros_like(u)
    fwd2 = np.zeros_like(u)
    fwd1[:-1, :] = (u[1:, :] - u[:-1, :]) / dx
    fwd2[:, :-1] = (u[:, 1:] - u[:, :-1]) / dx
    bwd1 = np.zeros_like(u)
    bwd2 = np.zeros_like(u)
    bwd1[1:, :] = fwd1[:-1, :]
    bwd2[:, 1:] = fwd2[:, :-1]
    return {K.DxMinus: bwd1, K.DxPlus: fwd1, K.DyMinus: bwd2, K.DyPlus: fwd2}


def upwind_coefs(normals: np.ndarray) -> dict:
    """Weights of the four one-sided differences for directions ``normals``."""
    n1, n2 = normals[..., 0], normals[..., 1]
    return {
        K.DxMinus: np.maximum(n1, 0.0),
        K.DxPlus: np.minimum(n1, 0.0),
        K.DyMinus: np.maximum(n2, 0.0),
        K.DyPlus: np.minimum(n2, 0.0),
    }


def upwind_advection(diffs: dict, normals: np.ndarray) -> np.ndarray:
    """``n . grad u`` by upwinding; ``diffs`` values broadcast against ``normals``."""
    w = upwind_coefs(normals)
    return sum(w[k] * diffs[k] for k in ONE_SIDED)


def hj_residual(u, grid: Grid2D, i: int, j: int, shape: TargetShape, cls: PointClass | None = None):
    """Boundary residual at ``(i, j)`` and the index of the maximising direction."""
    cls = classify(grid, i, j) if cls is None else cls
    adm = admissible_directions(shape, cls)
    if adm.size == 0:
        raise ConfigurationError(f"no admissible directions at {cls}; use n_dirs >= 8")
    best, arg = -np.inf, -1
    for jj in adm:
        n1, n2 = shape.directions[jj]
        v = -shape.support[jj]
        if n1 > 0:
            v += n1 * apply(K.DxMinus, u, grid, i, j)
        elif n1 < 0:
            v += n1 * apply(K.DxPlus, u, grid, i, j)
        if n2 > 0:
            v += n2 * apply(K.DyMinus, u, grid, i, j)
        elif n2 < 0:
            v += n2 * apply(K.DyPlus, u, grid, i, j)
        if v > best:
            best, arg = v, int(jj)
    return best, arg


def hj_jacobian_row(u, grid: Grid2D, i: int, j: int, shape: TargetShape, cls: PointClass | None = None):
    _, arg = hj_residual(u, grid, i, j, shape, cls)
    n1, n2 = shape.directions[arg]
    out: dict[int, float] = {}
    for kind, w in ((K.DxMinus, max(n1, 0.0)), (K.DxPlus, min(n1, 0.0)),
                    (K.DyMinus, max(n2, 0.0)), (K.DyPlus, min(n2, 0.0))):
        if w != 0.0:
            for k, c in row(kind, grid, i, j).items():
                out[k] = out.get(k, 0.0) + w * c
    return out


@dataclass
class BoundaryState:
    idx: np.ndarray
    H: np.ndarray
    direction: np.ndarray  # active direction index, or -1 for prescribed rows
    normals: np.ndarray


def _layout(grid: Grid2D, shape: TargetShape) -> list:
    """Boundary groups with their admissible directions, cached on the shape."""
    cache = shape.__dict__.setdefault("_layout_cache", {})
    key = (grid.n, grid.lo, grid.hi)
    if key not in cache:
        groups = []
        for cls, idx in grid.boundary_groups().items():
            adm = admissible_directions(shape, cls)
            if adm.size == 0:
                raise ConfigurationError(f"no admissible directions at {cls}; use n_dirs >= 8")
            nrm = shape.directions[adm]
            groups.append((idx, adm, nrm, upwind_coefs(nrm), shape.support[adm]))
        cache[key] = groups
    return cache[key]


def boundary_state(u, grid: Grid2D, shape: TargetShape) -> BoundaryState:
    """Vectorised HJ residual over all boundary points (ties -> lowest index)."""
    fields = _one_sided_fields(np.asarray(u, dtype=float).reshape(grid.shape), grid.dx)
    flat = {k: v.ravel() for k, v in fields.items()}
    idx_all, H_all, dir_all, nrm_all = [], [], [], []
    for idx, adm, nrm, w, sup in _layout(grid, shape):
        vals = -sup[None, :] + sum(w[k][None, :] * flat[k][idx][:, None] for k in ONE_SIDED)
        a = np.argmax(vals, axis=1)
        idx_all.append(idx)
        H_all.append(vals[np.arange(len(idx)), a])
        dir_all.append(adm[a])
        nrm_all.append(nrm[a])
    return BoundaryState(np.concatenate(idx_all), np.concatenate(H_all), np.concatenate(dir_all),
                         np.concatenate(nrm_all))


def neumann_state(u, grid: Grid2D, idx: np.ndarray, normals: np.ndarray, values: np.ndarray) -> BoundaryState:
    """Rows ``n . grad u - value`` with the upwind discretisation along fixed ``normals``."""
    diffs = one_sided(u, grid, idx)
    H = upwind_advection(diffs, normals) - values
    return BoundaryState(idx, H, np.full(len(idx), -1), normals)


def boundary_jacobian(grid: Grid2D, b: BoundaryState) -> tuple:
    return assemble_rows(grid, b.idx, upwind_coefs(b.normals))


@dataclass
class GlobalSystem:
    residual: np.ndarray
    jacobian: sp.csr_matrix | None
    active_info: dict = field(default_factory=dict)
    diagonal: np.ndarray | None = None

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.residual)))


def assemble(u, grid: Grid2D, pair: DensityPair, shape: TargetShape, p: SchemeParams,
             with_jacobian: bool = True, clamp: bool = True, boundary=None) -> GlobalSystem:
    """Interior filtered MA rows plus boundary rows for the iterate ``u``.

    ``with_jacobian="diagonal"`` skips the sparse assembly and fills
    :attr:`GlobalSystem.diagonal` only.

    ``boundary`` optionally replaces the HJ rows with fixed linear rows
    ``(normals, values)`` aligned with :func:`boundary_order`.
    """
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    st = interior_state(u, grid, pair, p, with_jacobian=with_jacobian, clamp=clamp)
    if boundary is None:
        bs = boundary_state(u, grid, shape)
    else:
        normals, values = boundary
        bs = neumann_state(u, grid, boundary_order(grid), normals, values)
    res = np.empty(grid.size)
    res[grid.interior_indices()] = st.G.ravel()
    res[bs.idx] = bs.H
    info = {
        "branch": st.branch,
        "filter_x": st.x,
        "boundary_idx": bs.idx,
        "direction": bs.direction,
    }
    J = None
    if with_jacobian == "diagonal":
        diag = diagonal_rows(grid, grid.interior_indices(), st.coefs, p.x0_of(grid))
        diag += diagonal_rows(grid, bs.idx, upwind_coefs(bs.normals))
        return GlobalSystem(res, None, info, diag)
    if with_jacobian:
        ri, ci, vi = assemble_rows(grid, grid.interior_indices(), st.coefs, p.x0_of(grid))
        rb, cb, vb = boundary_jacobian(grid, bs)
        J = sp.csr_matrix(
            (np.concatenate([vi, vb]), (np.concatenate([ri, rb]), np.concatenate([ci, cb]))),
            shape=(grid.size, grid.size),
        )
    return GlobalSystem(res, J, info, None if J is None else J.diagonal())


def boundary_order(grid: Grid2D) -> np.ndarray:
    """Flat indices of boundary points in the order used by :func:`assemble`."""
    return np.concatenate(list(grid.boundary_groups().values()))


def boundary_normals(grid: Grid2D) -> np.ndarray:
    """Outward normals (diagonal at corners) in :func:`boundary_order`."""
    out = []
    for cls, idx in grid.boundary_groups().items():
        out.append(np.tile(cls.outward_normal, (len(idx), 1)))
    return np.vstack(out)
