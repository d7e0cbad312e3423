"""Convex target sets: support-function tables, distances, admissible directions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PointClass

# Directions with n . n_x below this are treated as tangential (not admissible).
ADMISSIBLE_TOL = 1e-12


class DegenerateTargetError(ValueError):
    pass


class RequiresPolygonError(ValueError):
    pass


class NotABoundaryPointError(ValueError):
    pass


def directions(n_dirs: int) -> np.ndarray:
    """Unit directions at angles ``2*pi*j/n_dirs``, ``j = 0..n_dirs-1``."""
    theta = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    d = np.column_stack([np.cos(theta), np.sin(theta)])
    # make the axis directions exact
    d[np.abs(d) < 1e-15] = 0.0
    return d


@dataclass(frozen=True, eq=False)
class TargetShape:
    boundary_points: np.ndarray
    n_dirs: int
    directions: np.ndarray
    support: np.ndarray
    polygon: np.ndarray | None

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.boundary_points.min(axis=0), self.boundary_points.max(axis=0)

    @property
    def diameter(self) -> float:
        lo, hi = self.bbox
        return float(np.hypot(*(hi - lo)))

    def support_at(self, n: np.ndarray) -> np.ndarray:
        """Support function ``max_y0 y0 . n`` for arbitrary directions ``(..., 2)``."""
        return np.max(np.asarray(n) @ self.boundary_points.T, axis=-1)


def _angular_order(points: np.ndarray) -> np.ndarray:
    c = points.mean(axis=0)
    ang = np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0])
    return points[np.argsort(ang, kind="stable")]


def _is_convex_ordered(poly: np.ndarray) -> bool:
    e = np.roll(poly, -1, axis=0) - poly
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = np.max(np.abs(cross)) if cross.size else 0.0
    tol = 1e-12 * max(scale, 1e-300)
    return bool(np.all(cross >= -tol) or np.all(cross <= tol))


def build_target(points, n_dirs: int, ordered: bool = False, as_polygon: bool = True) -> TargetShape:
    """Precompute the support-function table of a convex target.

    ``points`` lie on the target boundary. With ``ordered=True`` they are
    taken as polygon vertices in order; otherwise they are sorted by angle
    around their centroid. ``as_polygon=False`` keeps only the point cloud,
    in which case exact polygon distances are unavailable.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateTargetError("target points must have shape (m, 2)")
    n_dirs = int(n_dirs)
    if n_dirs < 4 or n_dirs % 4:
        raise ValueError(f"n_dirs must be a multiple of 4 and >= 4, got {n_dirs}")
    pts = np.unique(pts, axis=0) if not ordered else pts
    if len(pts) < 3:
        raise DegenerateTargetError("need at least 3 distinct boundary points")
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateTargetError("boundary points are collinear")

    dirs = directions(n_dirs)
    support = np.max(pts @ dirs.T, axis=0)

    polygon = None
    if as_polygon:
        polygon = pts if ordered else _angular_order(pts)
        if ordered and not _is_convex_ordered(polygon):
            raise RequiresPolygonError("ordered points do not form a convex polygon")
    return TargetShape(pts, n_dirs, dirs, support, polygon)


def signed_distance_support(shape: TargetShape, y) -> np.ndarray:
    """``max_j (y . n_j - H*(n_j))`` over all table directions."""
    y = np.asarray(y, dtype=float)
    return np.max(y @ shape.directions.T - shape.support, axis=-1)


def _closest_on_polygon(poly: np.ndarray, y: np.ndarray, chunk: int = 1 << 22):
    """Unsigned distance, closest point, segment index and segment parameter."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a
    ee = np.einsum("ij,ij->i", e, e)
    m = len(a)
    flat = y.reshape(-1, 2)
    npts = len(flat)
    dist = np.empty(npts)
    seg = np.empty(npts, dtype=np.intp)
    tpar = np.empty(npts)
    step = max(1, chunk // m)
    for s in range(0, npts, step):
        p = flat[s : s + step]
        d = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pmk,mk->pm", d, e) / ee, 0.0, 1.0)
        r = d - t[..., None] * e[None]
        d2 = np.einsum("pmk,pmk->pm", r, r)
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(p))
        dist[s : s + step] = np.sqrt(d2[rows, k])
        seg[s : s + step] = k
        tpar[s : s + step] = t[rows, k]
    closest = a[seg] + tpar[:, None] * e[seg]
    shp = y.shape[:-1]
    return dist.reshape(shp), closest.reshape(shp + (2,)), seg.reshape(shp), tpar.reshape(shp)


def _inside_polygon(poly: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Even-odd containment test."""
    flat = y.reshape(-1, 2)
    a = poly
    b = np.roll(poly, -1, axis=0)
    inside = np.zeros(len(flat), dtype=bool)
    px, py = flat[:, 0:1], flat[:, 1:2]
    step = max(1, (1 << 22) // len(a))
    for s in range(0, len(flat), step):
        X, Y = px[s : s + step], py[s : s + step]
        cond = (a[None, :, 1] > Y) != (b[None, :, 1] > Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[None, :, 0] + (Y - a[None, :, 1]) * (b[None, :, 0] - a[None, :, 0]) / (
                b[None, :, 1] - a[None, :, 1]
            )
        cross = cond & (X < xint)
        inside[s : s + step] = np.count_nonzero(cross, axis=1) % 2 == 1
    return inside.reshape(y.shape[:-1])


def exact_polygon_distance(shape: TargetShape, y):
    """Signed distance to the polygon boundary and the closest boundary point.

    Negative inside, positive outside, zero on the boundary.
    """
    if shape.polygon is None:
        raise RequiresPolygonError("target has no polygon; build it with as_polygon=True")
    y = np.asarray(y, dtype=float)
    dist, closest, _, _ = _closest_on_polygon(shape.polygon, y)
    inside = _inside_polygon(shape.polygon, y)
    sdist = np.where(inside, -dist, dist)
    if y.ndim == 1:
        return float(sdist), closest
    return sdist, closest


def distance_gradient(shape: TargetShape, y) -> np.ndarray:
    """Gradient of the signed distance away from the boundary."""
    sd, c = exact_polygon_distance(shape, y)
    r = np.asarray(y, dtype=float) - c
    nr = np.linalg.norm(r, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(nr > 0, r / nr, 0.0)
    return np.where(np.asarray(sd)[..., None] < 0, -g, g)


def project_into(shape: TargetShape, y):
    """Closest point of the closed target set (identity inside).

    Also returns the 2x2 Jacobian of the projection at each point.
    """
    y = np.asarray(y, dtype=float)
    dist, closest, seg, t = _closest_on_polygon(shape.polygon, y)
    inside = _inside_polygon(shape.polygon, y) | (dist == 0)
    proj = np.where(inside[..., None], y, closest)
    poly = shape.polygon
    e = np.roll(poly, -1, axis=0) - poly
    tang = e[seg] / np.linalg.norm(e[seg], axis=-1, keepdims=True)
    jac = tang[..., :, None] * tang[..., None, :]
    at_vertex = (t <= 0.0) | (t >= 1.0)
    jac = np.where(at_vertex[..., None, None], 0.0, jac)
    jac = np.where(inside[..., None, None], np.eye(2), jac)
    return proj, jac


def admissible_directions(shape: TargetShape, cls: PointClass) -> np.ndarray:
    """Indices ``j`` with ``n_j . n_x > 0`` for every adjacent outward normal."""
    if cls.tag == "interior":
        raise NotABoundaryPointError("interior points have no admissible directions")
    ok = np.ones(shape.n_dirs, dtype=bool)
    for nx in cls.constraint_normals:
        ok &= shape.directions @ nx > ADMISSIBLE_TOL
    return np.flatnonzero(ok)


# -- named shapes ---------------------------------------------------------


def square_points(lo: float, hi: float) -> np.ndarray:
    return np.array([[lo, lo], [hi, lo], [hi, hi], [lo, hi]], dtype=float)


def disc_points(center=(0.0, 0.0), radius: float = 1.0, m: int = 1024) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(m) / m
    return np.asarray(center, float) + radius * np.column_stack([np.cos(t), np.sin(t)])


def ellipse_points(M, center=(0.0, 0.0), m: int = 1024) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(m) / m
    circle = np.column_stack([np.cos(t), np.sin(t)])
    return np.asarray(center, float) + circle @ np.asarray(M, float).T


def read_point_cloud(path) -> np.ndarray:
    """Plain text, one ``y1 y2`` pair per line; blank lines and ``#`` comments skipped."""
    pts = np.loadtxt(path, comments="#", ndmin=2)
    if pts.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, got {pts.shape[1]}")
    return pts
