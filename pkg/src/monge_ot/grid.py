"""Uniform square grids with boundary classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class InvalidGridError(ValueError):
    pass


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    BOTTOM = "bottom"
    TOP = "top"


class Corner(str, Enum):
    BL = "BL"
    BR = "BR"
    TL = "TL"
    TR = "TR"


_SIDE_NORMALS = {
    Side.LEFT: (-1.0, 0.0),
    Side.RIGHT: (1.0, 0.0),
    Side.BOTTOM: (0.0, -1.0),
    Side.TOP: (0.0, 1.0),
}

_CORNER_SIDES = {
    Corner.BL: (Side.LEFT, Side.BOTTOM),
    Corner.BR: (Side.RIGHT, Side.BOTTOM),
    Corner.TL: (Side.LEFT, Side.TOP),
    Corner.TR: (Side.RIGHT, Side.TOP),
}


@dataclass(frozen=True)
class PointClass:
    """Classification of a grid point.

    ``tag`` is ``"interior"``, ``"edge"`` or ``"corner"``. Edges carry their
    ``side`` and axis-aligned outward ``normal``; corners carry the pair of
    adjacent-edge normals whose open half-planes intersect in the quadrant of
    admissible directions.
    """

    tag: str
    side: Side | None = None
    corner: Corner | None = None

    @property
    def outward_normal(self) -> np.ndarray | None:
        if self.tag == "edge":
            return np.array(_SIDE_NORMALS[self.side])
        if self.tag == "corner":
            a, b = _CORNER_SIDES[self.corner]
            v = np.add(_SIDE_NORMALS[a], _SIDE_NORMALS[b])
            return v / np.sqrt(2.0)
        return None

    @property
    def constraint_normals(self) -> list[np.ndarray]:
        """Outward normals n_x such that admissible directions obey n . n_x > 0."""
        if self.tag == "edge":
            return [np.array(_SIDE_NORMALS[self.side])]
        if self.tag == "corner":
            return [np.array(_SIDE_NORMALS[s]) for s in _CORNER_SIDES[self.corner]]
        return []

    @property
    def quadrant(self) -> tuple[int, int] | None:
        """Signs (s1, s2) with admissible directions satisfying s_k * n_k > 0."""
        if self.tag != "corner":
            return None
        n = np.sum(self.constraint_normals, axis=0)
        return int(np.sign(n[0])), int(np.sign(n[1]))


INTERIOR = PointClass("interior")


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid on the square ``[lo, hi]^2`` with ``n`` points per side.

    Point ``(i, j)`` sits at ``(lo + i*dx, lo + j*dx)``; arrays over the grid
    have shape ``(n, n)`` indexed ``[i, j]`` and flatten in C order, so the
    flat index is ``i*n + j``.
    """

    n: int
    lo: float
    hi: float
    x0_index: int = field(default=-1)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InvalidGridError(f"need at least 3 points per side, got n={self.n}")
        if not self.hi > self.lo:
            raise InvalidGridError(f"empty bounds [{self.lo}, {self.hi}]")
        if self.x0_index < 0:
            object.__setattr__(self, "x0_index", self._central_interior_index())
        elif not 0 <= self.x0_index < self.size:
            raise InvalidGridError(f"x0_index {self.x0_index} outside grid")

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def coords(self) -> np.ndarray:
        return self.lo + self.dx * np.arange(self.n)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(X1, X2)`` of shape ``(n, n)``."""
        c = self.coords
        return np.meshgrid(c, c, indexing="ij")

    def points(self) -> np.ndarray:
        """All grid points as an ``(n*n, 2)`` array in flat-index order."""
        X1, X2 = self.mesh()
        return np.column_stack([X1.ravel(), X2.ravel()])

    def point(self, i: int, j: int) -> np.ndarray:
        return np.array([self.lo + i * self.dx, self.lo + j * self.dx])

    def flat_index(self, i, j):
        return np.asarray(i) * self.n + np.asarray(j)

    def ij(self, k):
        return np.divmod(k, self.n)

    def _central_interior_index(self) -> int:
        c = (self.n - 1) / 2.0
        idx = np.arange(1, self.n - 1)
        i = int(idx[np.argmin(np.abs(idx - c))])
        return i * self.n + i

    @property
    def x0(self) -> np.ndarray:
        return self.point(*self.ij(self.x0_index))

    def with_x0(self, x0_index: int) -> "Grid2D":
        return Grid2D(self.n, self.lo, self.hi, x0_index)

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1] = True
        return m

    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask().ravel())

    def boundary_groups(self) -> dict[PointClass, np.ndarray]:
        """Flat indices of boundary points grouped by their class."""
        n = self.n
        inner = np.arange(1, n - 1)
        last = n - 1
        return {
            PointClass("edge", side=Side.LEFT): self.flat_index(0, inner),
            PointClass("edge", side=Side.RIGHT): self.flat_index(last, inner),
            PointClass("edge", side=Side.BOTTOM): self.flat_index(inner, 0),
            PointClass("edge", side=Side.TOP): self.flat_index(inner, last),
            PointClass("corner", corner=Corner.BL): np.array([self.flat_index(0, 0)]),
            PointClass("corner", corner=Corner.BR): np.array([self.flat_index(last, 0)]),
            PointClass("corner", corner=Corner.TL): np.array([self.flat_index(0, last)]),
            PointClass("corner", corner=Corner.TR): np.array([self.flat_index(last, last)]),
        }


def build_grid(n: int, bounds: tuple[float, float] = (-0.5, 0.5)) -> Grid2D:
    lo, hi = bounds
    return Grid2D(int(n), float(lo), float(hi))


def classify(grid: Grid2D, i: int, j: int) -> PointClass:
    n = grid.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"({i}, {j}) outside {n}x{n} grid")
    lo_i, hi_i = i == 0, i == n - 1
    lo_j, hi_j = j == 0, j == n - 1
    if (lo_i or hi_i) and (lo_j or hi_j):
        name = ("B" if lo_j else "T") + ("L" if lo_i else "R")
        return PointClass("corner", corner=Corner(name))
    if lo_i:
        return PointClass("edge", side=Side.LEFT)
    if hi_i:
        return PointClass("edge", side=Side.RIGHT)
    if lo_j:
        return PointClass("edge", side=Side.BOTTOM)
    if hi_j:
        return PointClass("edge", side=Side.TOP)
    return INTERIOR
