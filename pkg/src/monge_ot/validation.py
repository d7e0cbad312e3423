"""Exact solutions, error metrics and post-processing of computed potentials."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid2D

PI = np.pi


# -- maps from potentials -------------------------------------------------


def transport_map(u: np.ndarray, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Discrete gradient: centred inside, inward one-sided on the boundary."""
    m1, m2 = np.gradient(np.asarray(u, float).reshape(grid.shape), grid.dx, edge_order=1)
    return m1, m2


def map_error(computed, exact, grid: Grid2D, mask=None) -> tuple[float, float]:
    """Max and root-mean-square Euclidean map error over masked grid points."""
    m1, m2 = computed
    pts = grid.points()
    sel = np.ones(grid.size, bool) if mask is None else np.asarray(mask, bool).ravel()
    ex = np.asarray(exact(pts[sel]))
    d = np.hypot(m1.ravel()[sel] - ex[:, 0], m2.ravel()[sel] - ex[:, 1])
    return float(d.max()), float(np.sqrt(np.mean(d**2)))


def map_interpolator(m, grid: Grid2D):
    """Bilinear evaluation of a gridded map at arbitrary points (clipped to the square)."""
    c = grid.coords
    f1 = RegularGridInterpolator((c, c), m[0], method="linear")
    f2 = RegularGridInterpolator((c, c), m[1], method="linear")

    def ev(pts):
        pts = np.clip(np.asarray(pts, float), grid.lo, grid.hi)
        return np.column_stack([f1(pts), f2(pts)])

    return ev


def inverse_consistency(u_fwd, u_inv, grid_fwd: Grid2D, grid_inv: Grid2D, mask=None) -> float:
    """``max |grad u_fwd(grad u_inv(x)) - x|`` over the inverse problem's grid points."""
    fwd = map_interpolator(transport_map(u_fwd, grid_fwd), grid_fwd)
    m_inv = transport_map(u_inv, grid_inv)
    x = grid_inv.points()
    y = np.column_stack([m_inv[0].ravel(), m_inv[1].ravel()])
    d = np.linalg.norm(fwd(y) - x, axis=1)
    if mask is not None:
        d = d[np.asarray(mask, bool).ravel()]
    return float(d.max())


# -- square to square -----------------------------------------------------


def q(z):
    z = np.asarray(z, float)
    return (-(z**2) / (8 * PI) + 1 / (256 * PI**3) + 1 / (32 * PI)) * np.cos(8 * PI * z) + z * np.sin(
        8 * PI * z
    ) / (32 * PI**2)


def dq(z):
    z = np.asarray(z, float)
    return np.sin(8 * PI * z) * (z**2 - 0.25)


def d2q(z):
    z = np.asarray(z, float)
    return 8 * PI * np.cos(8 * PI * z) * (z**2 - 0.25) + 2 * z * np.sin(8 * PI * z)


def exact_square_map(x):
    x = np.asarray(x, float)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x1 + 4 * dq(x1) * q(x2), x2 + 4 * q(x1) * dq(x2)], axis=-1)


def square_source_density(x):
    x = np.asarray(x, float)
    a, b = x[..., 0], x[..., 1]
    return (
        1
        + 4 * (d2q(a) * q(b) + q(a) * d2q(b))
        + 16 * (q(a) * q(b) * d2q(a) * d2q(b) - dq(a) ** 2 * dq(b) ** 2)
    )


# -- ellipse to ellipse ---------------------------------------------------

ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def ellipse_angle(Mx, My) -> float:
    P = np.linalg.inv(Mx) @ np.linalg.inv(My)
    return float(np.arctan(np.trace(P @ ROT90) / np.trace(P)))


def ellipse_map_matrix(Mx, My) -> np.ndarray:
    th = ellipse_angle(Mx, My)
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return np.asarray(My, float) @ R @ np.linalg.inv(Mx)


def exact_ellipse_map(Mx, My, x):
    A = ellipse_map_matrix(np.asarray(Mx, float), np.asarray(My, float))
    return np.asarray(x, float) @ A.T


# -- two half discs to a disc ---------------------------------------------


def exact_split_map(x, left_shift: float = -0.2, right_shift: float = 0.1):
    """Each half disc is translated back onto the matching half of the disc."""
    x = np.asarray(x, float)
    mid = 0.5 * (left_shift + right_shift)
    shift = np.where(x[..., 0] < mid, -left_shift, -right_shift)
    out = x.copy()
    out[..., 0] = x[..., 0] + shift
    return out


# -- Legendre transform and Pogorelov cells -------------------------------


def legendre_transform(u: np.ndarray, grid: Grid2D, ys, chunk: int = 64) -> np.ndarray:
    """Discrete conjugate ``max_x (x . y - u(x))`` over grid points, for each ``y``."""
    ys = np.atleast_2d(np.asarray(ys, float))
    pts = grid.points()
    uu = np.asarray(u, float).ravel()
    out = np.empty(len(ys))
    for s in range(0, len(ys), chunk):
        out[s : s + chunk] = np.max(ys[s : s + chunk] @ pts.T - uu, axis=1)
    return out


@dataclass
class PogorelovResult:
    v: np.ndarray
    cell_areas: np.ndarray
    area_errors: np.ndarray
    labels: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(np.count_nonzero(self.cell_areas > 0))

    @property
    def linf_error(self) -> float:
        return float(self.area_errors.max())

    @property
    def l2_error(self) -> float:
        return float(np.sqrt(np.mean(self.area_errors**2)))


def pogorelov_potential(x, ys, v) -> tuple[np.ndarray, np.ndarray]:
    """``max_j (x . y_j - v_j)`` and the maximising ``j`` (ties -> lowest)."""
    vals = np.asarray(x, float) @ np.asarray(ys, float).T - np.asarray(v, float)
    lab = np.argmax(vals, axis=-1)
    return np.take_along_axis(vals, lab[..., None], axis=-1)[..., 0], lab


def pogorelov_cells(v, grid: Grid2D, ys, qs, source_mask) -> PogorelovResult:
    """Cells of the piecewise-affine potential on ``grid`` restricted to the source support.

    ``area_errors`` are percentages relative to the weights ``qs``.
    """
    ys = np.asarray(ys, float)
    qs = np.asarray(qs, float)
    pts = grid.points()
    sel = np.asarray(source_mask, bool).ravel()
    _, lab = pogorelov_potential(pts, ys, v)
    lab = np.where(sel, lab, -1)
    counts = np.bincount(lab[sel], minlength=len(ys))
    areas = counts * grid.dx**2
    err = 100.0 * np.abs(areas - qs) / qs
    return PogorelovResult(np.asarray(v, float), areas, err, lab.reshape(grid.shape))
