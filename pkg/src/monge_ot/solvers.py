"""Nonlinear solvers for the discrete system: damped Newton, explicit
iteration and the projection (Neumann splitting) method."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .boundary import boundary_normals, boundary_order
from .density import BlendedDensity, ExtendedTargetDensity, normalize_masses, target_mass
from .grid import Grid2D
from .problem import OTProblem
from .target import TargetShape, exact_polygon_distance

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Base solver failure; ``iterations`` records the work done before it."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations


class LinearSolveError(SolverError):
    pass


class StagnationError(SolverError):
    pass


class InstabilityError(SolverError):
    pass


@dataclass
class SolverConfig:
    method: str = "newton"
    tol: float = 1e-8
    max_iter: int | None = None
    alpha_min: float = 2.0**-10
    euler_dt_safety: float = 0.9
    euler_dt: float | None = None
    inner_tol: float | None = None
    clamp: bool = True
    globalization: str = "auto"
    stage_tol: float = 1e-5
    continuation_ratio: float = 0.1
    continuation_floor: float = 1e-3

    def __post_init__(self):
        if self.method not in ("newton", "euler", "projection"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 < self.alpha_min <= 1:
            raise ValueError("alpha_min must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.globalization not in ("auto", "continuation", "none"):
            raise ValueError(f"unknown globalization {self.globalization!r}")
        if not 0 < self.continuation_ratio < 1:
            raise ValueError("continuation_ratio must lie in (0, 1)")

    @property
    def iteration_limit(self) -> int:
        if self.max_iter is not None:
            return int(self.max_iter)
        return {"newton": 50, "euler": 1_000_000, "projection": 200}[self.method]


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "damping": [float(a) for a in self.damping],
            "wall_time": self.wall_time,
            "converged": self.converged,
            **self.extra,
        }


def initialize(grid: Grid2D, shape: TargetShape, support=None) -> np.ndarray:
    """Separable convex quadratic whose gradient maps the source box onto the target box.

    The source box is the bounding box of the grid points in ``support``
    (the whole grid when omitted).
    """
    lo, hi = shape.bbox
    width = hi - lo
    if np.any(width <= 0):
        raise ValueError("target bounding box is degenerate")
    pts = grid.points()
    if support is not None:
        sel = np.asarray(support, bool).ravel()
        if sel.any():
            pts = pts[sel]
    xlo, xhi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(xhi > xlo, xhi - xlo, grid.hi - grid.lo)
    s = width / span
    c = 0.5 * (xlo + xhi)
    b = 0.5 * (lo + hi)
    X1, X2 = grid.mesh()
    return 0.5 * (s[0] * (X1 - c[0]) ** 2 + s[1] * (X2 - c[1]) ** 2) + b[0] * X1 + b[1] * X2


def linear_solve(A, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse LU solve; raises on singular or non-finite results."""
    A = sp.csc_matrix(A)
    try:
        lu = sla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse factorisation failed: {exc}") from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("linear solve produced non-finite values")
    r = rhs - A @ x
    scale = max(np.max(np.abs(rhs)), 1e-300)
    if np.max(np.abs(r)) > 1e-10 * scale:
        x = x + lu.solve(r)
    return x


def newton_solve(cfg: SolverConfig, problem: OTProblem, u0=None, boundary=None):
    """Damped Newton with step halving until the max-norm residual drops."""
    t0 = time.perf_counter()
    grid = problem.grid
    u = (initialize(grid, problem.shape, problem.mask) if u0 is None else np.array(u0, dtype=float)).ravel()
    rep = SolveReport("newton")
    sys_ = problem.system(u, clamp=cfg.clamp, boundary=boundary)
    norm = sys_.norm
    rep.residual_history.append(norm)
    for it in range(cfg.iteration_limit):
        if norm <= cfg.tol:
            break
        try:
            d = linear_solve(sys_.jacobian, sys_.residual)
        except LinearSolveError as exc:
            raise LinearSolveError(f"Newton iteration {it}: {exc}", it) from exc
        alpha = 1.0
        while True:
            trial = u - alpha * d
            tnorm = problem.system(trial, with_jacobian=False, boundary=boundary).norm
            if tnorm < norm:
                break
            alpha *= 0.5
            if alpha < cfg.alpha_min:
                raise StagnationError(
                    f"Newton iteration {it}: no decrease of residual {norm:.3e} down to alpha={cfg.alpha_min:g}",
                    it,
                )
        u = trial
        sys_ = problem.system(u, clamp=cfg.clamp, boundary=boundary)
        norm = sys_.norm
        rep.iterations += 1
        rep.damping.append(alpha)
        rep.residual_history.append(norm)
        log.debug("newton %d: residual %.3e alpha %g", it, norm, alpha)
    rep.converged = norm <= cfg.tol
    rep.wall_time = time.perf_counter() - t0
    rep.extra["final_info"] = sys_.active_info
    return u.reshape(grid.shape), rep


def euler_solve(cfg: SolverConfig, problem: OTProblem, u0=None):
    """Explicit iteration ``u <- u - dt * G[u]`` to steady state.

    ``dt`` is recomputed every sweep from the largest Jacobian diagonal
    unless ``cfg.euler_dt`` fixes it.
    """
    t0 = time.perf_counter()
    grid = problem.grid
    u = (initialize(grid, problem.shape, problem.mask) if u0 is None else np.array(u0, dtype=float)).ravel()
    rep = SolveReport("euler")
    dx2 = grid.dx**2
    rises = 0
    prev = np.inf
    sys_ = problem.system(u, with_jacobian="diagonal" if cfg.euler_dt is None else False)
    for it in range(cfg.iteration_limit):
        norm = sys_.norm
        if not np.isfinite(norm):
            raise InstabilityError(f"explicit iteration {it}: non-finite residual")
        if it % 1000 == 0 or norm <= cfg.tol:
            rep.residual_history.append(norm)
        if norm <= cfg.tol:
            break
        rises = rises + 1 if norm > prev else 0
        if rises >= 100:
            raise InstabilityError(f"explicit iteration {it}: residual grew for 100 consecutive sweeps")
        prev = norm
        if cfg.euler_dt is None:
            bound = float(np.max(np.abs(sys_.diagonal))) * dx2 / 4.0
            dt = cfg.euler_dt_safety * dx2 / (4.0 * max(1.0, bound))
        else:
            dt = cfg.euler_dt
        u = u - dt * sys_.residual
        rep.iterations += 1
        sys_ = problem.system(u, with_jacobian="diagonal" if cfg.euler_dt is None else False)
    rep.residual_history.append(sys_.norm)
    rep.converged = sys_.norm <= cfg.tol
    rep.wall_time = time.perf_counter() - t0
    return u.reshape(grid.shape), rep


def boundary_gradient(u: np.ndarray, grid: Grid2D, idx: np.ndarray | None = None) -> np.ndarray:
    """Gradient at boundary points: inward one-sided normal part, centred tangential part."""
    from .validation import transport_map

    idx = boundary_order(grid) if idx is None else idx
    m1, m2 = transport_map(u, grid)
    return np.column_stack([m1.ravel()[idx], m2.ravel()[idx]])


def projection_solve(cfg: SolverConfig, problem: OTProblem, u0=None):
    """Alternate a Neumann-data Monge-Ampere solve with projecting the
    boundary gradient onto the target boundary."""
    t0 = time.perf_counter()
    grid, shape = problem.grid, problem.shape
    if shape.polygon is None:
        exact_polygon_distance(shape, np.zeros(2))  # raises RequiresPolygonError
    idx = boundary_order(grid)
    normals = boundary_normals(grid)
    u = initialize(grid, shape, problem.mask) if u0 is None else np.array(u0, dtype=float).reshape(grid.shape)
    _, p = exact_polygon_distance(shape, boundary_gradient(u, grid, idx))
    inner = SolverConfig("newton", tol=cfg.inner_tol or cfg.tol, alpha_min=cfg.alpha_min)
    rep = SolveReport("projection")
    newton_its = 0
    for it in range(cfg.iteration_limit):
        values = np.sum(p * normals, axis=1)
        u, irep = newton_solve(inner, problem, u, boundary=(normals, values))
        newton_its += irep.iterations
        half = boundary_gradient(u, grid, idx)
        _, p = exact_polygon_distance(shape, half)
        move = float(np.max(np.linalg.norm(p - half, axis=1)))
        rep.iterations += 1
        rep.residual_history.append(move)
        log.debug("projection %d: boundary movement %.3e", it, move)
        if move <= cfg.tol:
            rep.converged = True
            break
    rep.extra["newton_iterations"] = newton_its
    rep.extra["hj_residual"] = problem.system(u, with_jacobian=False).norm
    rep.wall_time = time.perf_counter() - t0
    return u, rep


# -- density continuation -------------------------------------------------


def blended_problem(problem: OTProblem, lam: float) -> OTProblem:
    """The problem with both densities blended toward their mean values by ``lam``.

    ``lam = 1`` gives uniform densities on the whole square and on the
    target; ``lam = 0`` returns ``problem`` itself.
    """
    if lam == 0.0:
        return problem
    grid, pair, shape = problem.grid, problem.pair, problem.shape
    area = (grid.hi - grid.lo) ** 2
    mean_x = float(pair.rho_x.sum()) * grid.dx**2 / area
    rho_x = (1.0 - lam) * pair.rho_x + lam * mean_x
    rho_y = pair.rho_y
    if isinstance(rho_y, ExtendedTargetDensity) and shape.polygon is not None and not rho_y.rho.is_constant:
        poly = shape.polygon
        poly_area = 0.5 * abs(np.dot(poly[:, 0], np.roll(poly[:, 1], -1)) - np.dot(poly[:, 1], np.roll(poly[:, 0], -1)))
        level = target_mass(rho_y, shape) / poly_area
        rho_y = ExtendedTargetDensity(BlendedDensity(rho_y.rho, lam, level), shape, rho_y.rho0)
    stage = replace(pair, rho_x=rho_x, rho_y=rho_y)
    if shape.polygon is not None:
        stage = normalize_masses(stage, grid, shape)
    return OTProblem(grid, stage, shape, problem.params, np.ones(grid.shape, bool), dict(problem.meta))


def continuation_solve(cfg: SolverConfig, problem: OTProblem, u0=None):
    """Newton along a path of blended densities, from uniform to the given ones.

    The blend weight starts at 1 and shrinks geometrically. A stage that
    fails is retried with a gentler step; weights below
    ``cfg.continuation_floor`` jump straight to 0.
    """
    t0 = time.perf_counter()
    grid = problem.grid
    stage_cfg = replace(cfg, tol=max(cfg.tol, cfg.stage_tol), globalization="none")
    u = initialize(grid, problem.shape) if u0 is None else np.array(u0, dtype=float)
    u, r = newton_solve(stage_cfg, blended_problem(problem, 1.0), u)
    stages = [{"lambda": 1.0, "iterations": r.iterations}]
    total = r.iterations
    lam, ratio, floor = 1.0, cfg.continuation_ratio, cfg.continuation_floor
    final = None
    while lam > 0.0:
        trial = lam * ratio
        if trial < floor:
            trial = 0.0
        sub_cfg = cfg if trial == 0.0 else stage_cfg
        try:
            v, r = newton_solve(sub_cfg, blended_problem(problem, trial), u)
            ok = r.converged
        except SolverError as exc:
            log.debug("continuation stage %.3g failed: %s", trial, exc)
            ok, r = False, None
        stages.append({"lambda": trial, "iterations": r.iterations if r else None, "converged": ok})
        if r is not None:
            total += r.iterations
        if ok:
            lam, u, final = trial, v, r
            ratio = max(ratio * ratio, 1e-2)
            continue
        if trial == 0.0 and floor > 1e-8:
            floor /= 10.0
            continue
        ratio = np.sqrt(ratio)
        if ratio > 0.99:
            raise StagnationError(f"density continuation stalled at lambda={lam:.3g}")
    final.iterations = total
    final.extra["continuation"] = stages
    final.wall_time = time.perf_counter() - t0
    return u, final


def _has_gaps(problem: OTProblem) -> bool:
    return bool(np.any(problem.pair.rho_x <= 0))


def solve(cfg: SolverConfig, problem: OTProblem, u0=None):
    """Dispatch on ``cfg.method``.

    For Newton with ``globalization="auto"`` a stalled direct solve is
    retried by density continuation; the failed attempt's iterations are
    included in the report.
    """
    if cfg.method == "euler":
        return euler_solve(cfg, problem, u0)
    if cfg.method == "projection":
        return projection_solve(cfg, problem, u0)
    if cfg.globalization == "continuation":
        return continuation_solve(cfg, problem, u0)
    if cfg.globalization == "none":
        return newton_solve(cfg, problem, u0)
    t0 = time.perf_counter()
    try:
        u, rep = newton_solve(cfg, problem, u0)
        if rep.converged:
            return u, rep
        spent = rep.iterations
    except (StagnationError, LinearSolveError) as exc:
        log.info("direct Newton failed (%s); switching to density continuation", exc)
        spent = exc.iterations or 0
    u, rep = continuation_solve(cfg, problem, u0)
    rep.iterations += spent
    rep.extra["direct_attempt_iterations"] = spent
    rep.wall_time = time.perf_counter() - t0
    return u, rep
