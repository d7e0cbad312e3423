"""Source and target densities.

Source densities are sampled on the grid and zero-extended outside their
support. Target densities are evaluators defined on all of R^2: the given
density is composed with the closest-point projection onto the target and
floored at ``rho0`` so the ratio rho_X / rho_Y stays Lipschitz.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid2D
from .target import TargetShape, project_into


class InvalidDensityError(ValueError):
    pass


class DegenerateProblemError(ValueError):
    pass


# -- pointwise densities --------------------------------------------------


class Density:
    """A density on R^2 with a gradient; subclasses override ``__call__``.

    The default gradient is a central difference with step ``fd_step``.
    """

    fd_step = 1e-6

    def __call__(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        h = self.fd_step
        g = np.empty(y.shape)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            g[..., k] = (self(y + e) - self(y - e)) / (2 * h)
        return g

    @property
    def is_constant(self) -> bool:
        return False


@dataclass(frozen=True)
class ConstantDensity(Density):
    value: float = 1.0

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1], float(self.value))

    def grad(self, y):
        return np.zeros(np.shape(y))

    @property
    def is_constant(self) -> bool:
        return True


@dataclass(frozen=True)
class GaussianDensity(Density):
    """``base + sum_c exp(-|y - c|^2 / (2 sigma^2)) / sigma^2``."""

    centers: tuple = ((0.0, 0.0),)
    sigma: float = 0.2
    base: float = 2.0

    def _terms(self, y):
        y = np.asarray(y, dtype=float)
        c = np.asarray(self.centers, dtype=float)
        d = y[..., None, :] - c
        e = np.exp(-0.5 * np.sum(d * d, axis=-1) / self.sigma**2) / self.sigma**2
        return d, e

    def __call__(self, y):
        _, e = self._terms(y)
        return self.base + e.sum(axis=-1)

    def grad(self, y):
        d, e = self._terms(y)
        return -np.sum(e[..., None] * d, axis=-2) / self.sigma**2


@dataclass(frozen=True)
class QuadrantGaussianDensity(Density):
    """One Gaussian bump per quadrant, centred at that quadrant's corner ``(+-a, +-a)``.

    ``base + exp(-|y - c(y)|^2 / (2 sigma^2)) / sigma^2`` where ``c(y)`` is the
    corner in the quadrant containing ``y``.
    """

    corner: float = 1.0
    sigma: float = 0.2
    base: float = 2.0

    def _offset(self, y):
        y = np.asarray(y, dtype=float)
        c = np.where(y < 0, -self.corner, self.corner)
        d = y - c
        return d, np.exp(-0.5 * np.sum(d * d, axis=-1) / self.sigma**2) / self.sigma**2

    def __call__(self, y):
        return self.base + self._offset(y)[1]

    def grad(self, y):
        d, e = self._offset(y)
        return -e[..., None] * d / self.sigma**2


@dataclass(frozen=True)
class FunctionDensity(Density):
    """Wraps a vectorised callable ``f(y) -> values`` (and optional gradient)."""

    func: object
    gradient: object = None

    def __call__(self, y):
        return np.asarray(self.func(np.asarray(y, dtype=float)), dtype=float)

    def grad(self, y):
        if self.gradient is None:
            return super().grad(y)
        return np.asarray(self.gradient(np.asarray(y, dtype=float)), dtype=float)


class BlendedDensity(Density):
    """``(1 - lam) * rho + lam * level``: a path from a constant to ``rho``."""

    def __init__(self, rho: Density, lam: float, level: float):
        self.rho = rho
        self.lam = float(lam)
        self.level = float(level)

    @property
    def is_constant(self) -> bool:
        return self.rho.is_constant or self.lam == 1.0

    def __call__(self, y):
        if self.lam == 1.0:
            return np.full(np.shape(y)[:-1], self.level)
        return (1.0 - self.lam) * self.rho(y) + self.lam * self.level

    def grad(self, y):
        if self.is_constant:
            return np.zeros(np.shape(y))
        return (1.0 - self.lam) * self.rho.grad(y)


class ExtendedTargetDensity(Density):
    """``max(rho(P_Y(y)), rho0)`` with ``P_Y`` the projection onto the target."""

    def __init__(self, rho: Density, shape: TargetShape, rho0: float):
        if not rho0 > 0:
            raise InvalidDensityError(f"density floor must be positive, got {rho0}")
        self.rho = rho
        self.shape = shape
        self.rho0 = float(rho0)
        lo, hi = shape.bbox
        poly = shape.polygon
        self._box = None
        if poly is not None and len(poly) == 4:
            if np.all(np.isclose(poly[:, 0], lo[0]) | np.isclose(poly[:, 0], hi[0])) and np.all(
                np.isclose(poly[:, 1], lo[1]) | np.isclose(poly[:, 1], hi[1])
            ):
                self._box = (lo, hi)

    @property
    def is_constant(self) -> bool:
        return self.rho.is_constant

    def _project(self, y):
        y = np.asarray(y, dtype=float)
        if self._box is not None:
            lo, hi = self._box
            p = np.clip(y, lo, hi)
            free = (y > lo) & (y < hi)
            jac = np.zeros(y.shape + (2,))
            jac[..., 0, 0] = free[..., 0]
            jac[..., 1, 1] = free[..., 1]
            return p, jac
        if self.shape.polygon is None:
            # a point cloud only: no projection available, evaluate directly
            return y, np.broadcast_to(np.eye(2), y.shape + (2,))
        return project_into(self.shape, y)

    def __call__(self, y):
        if self.rho.is_constant:
            return np.maximum(self.rho(y), self.rho0)
        p, _ = self._project(y)
        return np.maximum(self.rho(p), self.rho0)

    def grad(self, y):
        if self.rho.is_constant:
            return np.zeros(np.shape(y))
        p, jac = self._project(y)
        g = np.einsum("...k,...kl->...l", self.rho.grad(p), jac)
        floored = self.rho(p) < self.rho0
        return np.where(floored[..., None], 0.0, g)


# -- source masks ---------------------------------------------------------


def square_mask(lo: float, hi: float):
    def mask(x):
        x = np.asarray(x)
        return np.all((x >= lo) & (x <= hi), axis=-1)

    return mask


def disc_mask(center=(0.0, 0.0), radius: float = 1.0):
    c = np.asarray(center, float)

    def mask(x):
        return np.sum((np.asarray(x) - c) ** 2, axis=-1) < radius**2

    return mask


def ellipse_mask(M, center=(0.0, 0.0)):
    Minv = np.linalg.inv(np.asarray(M, float))
    c = np.asarray(center, float)

    def mask(x):
        z = (np.asarray(x) - c) @ Minv.T
        return np.sum(z * z, axis=-1) < 1.0

    return mask


def half_disc_pair_mask(radius: float = 0.85, left_shift: float = -0.2, right_shift: float = 0.1):
    """Left half-disc centred at ``(left_shift, 0)`` union right half-disc at ``(right_shift, 0)``."""

    def mask(x):
        x = np.asarray(x)
        x1, x2 = x[..., 0], x[..., 1]
        left = (x1 < left_shift) & ((x1 - left_shift) ** 2 + x2**2 < radius**2)
        right = (x1 > right_shift) & ((x1 - right_shift) ** 2 + x2**2 < radius**2)
        return left | right

    return mask


def c_shape_mask(r_in: float = 0.4, r_out: float = 0.85, opening: float = np.pi / 4):
    """Annulus with a wedge of half-angle ``opening`` removed on the right."""

    def mask(x):
        x = np.asarray(x)
        r = np.hypot(x[..., 0], x[..., 1])
        ang = np.abs(np.arctan2(x[..., 1], x[..., 0]))
        return (r > r_in) & (r < r_out) & (ang > opening)

    return mask


# -- construction ---------------------------------------------------------


def sample_source(rho, support_mask, grid: Grid2D) -> np.ndarray:
    """Sample ``rho`` on the grid, zero outside ``support_mask``."""
    pts = grid.points()
    inside = np.asarray(support_mask(pts), dtype=bool)
    vals = np.zeros(len(pts))
    if inside.any():
        vals[inside] = np.asarray(rho(pts[inside]), dtype=float)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise InvalidDensityError("source density must be finite and nonnegative")
    return vals.reshape(grid.shape)


def dirac_source(grid: Grid2D, ys, mass: float = 1.0):
    """Diracs at the grid points nearest ``ys``, each weighing ``mass / len(ys)``.

    Returns the field and the flat indices of the snapped points.
    """
    ys = np.asarray(ys, dtype=float)
    idx = np.rint((ys - grid.lo) / grid.dx).astype(int)
    idx = np.clip(idx, 0, grid.n - 1)
    flat = grid.flat_index(idx[:, 0], idx[:, 1])
    if len(np.unique(flat)) != len(flat):
        raise InvalidDensityError("two Dirac masses snap to the same grid point")
    field = np.zeros(grid.size)
    field[flat] = mass / (len(ys) * grid.dx**2)
    return field.reshape(grid.shape), flat


def _polygon_quadrature(poly: np.ndarray, func, n_eval: int = 200_000) -> float:
    """Integrate ``func`` over a convex polygon by a fan of collapsed Gauss rules."""
    c0 = poly.mean(axis=0)
    a = poly - c0
    b = np.roll(poly, -1, axis=0) - c0
    q = int(max(4, np.sqrt(n_eval / len(poly))))
    s, ws = np.polynomial.legendre.leggauss(q)
    s, ws = 0.5 * (s + 1), 0.5 * ws
    S, T = np.meshgrid(s, s, indexing="ij")
    W = np.outer(ws, ws)
    total = 0.0
    area = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    for k in range(len(poly)):
        pts = c0 + S[..., None] * ((1 - T)[..., None] * a[k] + T[..., None] * b[k])
        total += area[k] * np.sum(W * S * func(pts))
    return float(total)


@dataclass(frozen=True, eq=False)
class DensityPair:
    rho_x: np.ndarray
    rho_y: Density
    rho_floor: float
    lipschitz_k: float = 0.0

    def ratio(self, x_values: np.ndarray, p: np.ndarray):
        """``F = rho_x / rho_y(p)`` and ``dF/dp`` for source values ``x_values``."""
        ry = self.rho_y(p)
        F = x_values / ry
        if self.rho_y.is_constant:
            return F, np.zeros(np.shape(p))
        dF = -(x_values / ry**2)[..., None] * self.rho_y.grad(p)
        return F, dF


def extend_target(rho_on_Y: Density, shape: TargetShape, rho0: float | None = None) -> ExtendedTargetDensity:
    """Extend a target density to all of R^2 with a positive floor.

    ``rho0`` defaults to 1e-2 times the largest value seen on boundary and
    centroid probes.
    """
    probes = np.vstack([shape.boundary_points, shape.boundary_points.mean(axis=0)])
    vals = np.asarray(rho_on_Y(probes), dtype=float)
    if rho0 is None:
        rho0 = 1e-2 * float(vals.max())
    if not rho0 > 0:
        raise InvalidDensityError(f"density floor must be positive, got {rho0}")
    if rho0 > vals.min():
        warnings.warn(
            f"density floor {rho0:g} exceeds the target density minimum {vals.min():g} on probes",
            stacklevel=2,
        )
    return ExtendedTargetDensity(rho_on_Y, shape, rho0)


def target_mass(rho_y: Density, shape: TargetShape) -> float:
    if shape.polygon is None:
        raise ValueError("target mass needs a polygonal target")
    base = rho_y.rho if isinstance(rho_y, ExtendedTargetDensity) else rho_y
    return _polygon_quadrature(shape.polygon, base)


def normalize_masses(pair: DensityPair, grid: Grid2D, shape: TargetShape) -> DensityPair:
    """Rescale the source so its discrete mass equals the target mass."""
    m_src = float(pair.rho_x.sum()) * grid.dx**2
    m_tgt = target_mass(pair.rho_y, shape)
    if not m_src > 0 or not m_tgt > 0:
        raise DegenerateProblemError(f"zero mass (source {m_src:g}, target {m_tgt:g})")
    return replace(pair, rho_x=pair.rho_x * (m_tgt / m_src))


def estimate_lipschitz(pair: DensityPair, grid: Grid2D, probe_radius: float, shape: TargetShape | None = None,
                       n_probe: int = 64) -> float:
    """Largest forward-difference slope of ``rho_x / rho_y`` in ``y``.

    Probes cover the target bounding box (or the grid square) enlarged by
    ``probe_radius``.
    """
    if pair.rho_y.is_constant:
        return 0.0
    h = float(probe_radius)
    if shape is not None:
        lo, hi = shape.bbox
    else:
        lo, hi = np.array([grid.lo, grid.lo]), np.array([grid.hi, grid.hi])
    t1 = np.linspace(lo[0] - h, hi[0] + h, n_probe)
    t2 = np.linspace(lo[1] - h, hi[1] + h, n_probe)
    Y = np.stack(np.meshgrid(t1, t2, indexing="ij"), axis=-1)
    inv = 1.0 / pair.rho_y(Y)
    slope = 0.0
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        slope = max(slope, float(np.max(np.abs(1.0 / pair.rho_y(Y + e) - inv)) / h))
    return float(pair.rho_x.max()) * slope


def make_pair(rho_x: np.ndarray, rho_on_Y: Density, shape: TargetShape, grid: Grid2D,
              rho0: float | None = None, normalize: bool = True) -> DensityPair:
    """Assemble a normalised :class:`DensityPair` with its Lipschitz estimate."""
    ext = extend_target(rho_on_Y, shape, rho0)
    pair = DensityPair(np.asarray(rho_x, dtype=float), ext, ext.rho0)
    if normalize:
        pair = normalize_masses(pair, grid, shape)
    K = estimate_lipschitz(pair, grid, grid.dx, shape)
    return replace(pair, lipschitz_k=K)
