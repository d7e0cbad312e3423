"""Ready-made transport problems with known answers, and convergence studies."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .density import (
    ConstantDensity,
    GaussianDensity,
    QuadrantGaussianDensity,
    c_shape_mask,
    dirac_source,
    disc_mask,
    ellipse_mask,
    half_disc_pair_mask,
    make_pair,
    sample_source,
    square_mask,
    target_mass,
)
from .grid import build_grid
from .problem import OTProblem
from .scheme import SchemeParams
from .solvers import SolverConfig, solve
from .target import build_target, disc_points, ellipse_points, square_points
from .validation import (
    exact_ellipse_map,
    exact_split_map,
    exact_square_map,
    inverse_consistency,
    map_error,
    pogorelov_cells,
    square_source_density,
    transport_map,
)

ELLIPSE_MX = np.diag([0.8, 0.4])
ELLIPSE_MY = np.array([[0.6, 0.2], [0.2, 0.8]])
SPLIT_RADIUS = 0.85

EXPERIMENTS = ("square", "ellipse", "split", "inverse", "pogorelov", "cshape")


@dataclass(eq=False)
class Experiment:
    name: str
    problem: OTProblem
    exact: Callable | None = None
    meta: dict = field(default_factory=dict)


def _problem(grid, rho_x, rho_y, shape, delta=None, eps=None, rho0=None, **meta):
    pair = make_pair(rho_x, rho_y, shape, grid, rho0=rho0)
    params = SchemeParams.default(grid, None, delta=delta, eps=eps)
    return OTProblem(grid, pair, shape, params, source_mask=rho_x > 0, meta=meta)


def square(n: int = 32, n_dirs: int = 16, **kw) -> Experiment:
    """Smooth density on the unit square onto the uniform unit square."""
    grid = build_grid(n, (-0.5, 0.5))
    rho_x = sample_source(square_source_density, square_mask(-0.5, 0.5), grid)
    shape = build_target(square_points(-0.5, 0.5), n_dirs, ordered=True)
    prob = _problem(grid, rho_x, ConstantDensity(1.0), shape, **kw)
    return Experiment("square", prob, exact_square_map)


def ellipse(n: int = 64, n_dirs: int = 256, bounds=(-1.0, 1.0), n_boundary: int = 2048, **kw) -> Experiment:
    """Uniform ellipse ``Mx B`` onto uniform ellipse ``My B``."""
    grid = build_grid(n, bounds)
    rho_x = sample_source(lambda x: np.ones(x.shape[:-1]), ellipse_mask(ELLIPSE_MX), grid)
    shape = build_target(ellipse_points(ELLIPSE_MY, m=n_boundary), n_dirs, ordered=True)
    prob = _problem(grid, rho_x, ConstantDensity(1.0), shape, **kw)
    return Experiment("ellipse", prob, lambda x: exact_ellipse_map(ELLIPSE_MX, ELLIPSE_MY, x))


def split(n: int = 64, n_dirs: int = 256, bounds=(-1.1, 1.1), n_boundary: int = 2048, **kw) -> Experiment:
    """Two separated half discs onto one disc."""
    grid = build_grid(n, bounds)
    rho_x = sample_source(lambda x: np.ones(x.shape[:-1]), half_disc_pair_mask(SPLIT_RADIUS), grid)
    shape = build_target(disc_points(radius=SPLIT_RADIUS, m=n_boundary), n_dirs, ordered=True)
    prob = _problem(grid, rho_x, ConstantDensity(1.0), shape, **kw)
    return Experiment("split", prob, exact_split_map)


def gaussian(n: int = 64, n_dirs: int = 16, inverse: bool = False, **kw) -> Experiment:
    """Centre Gaussian against corner Gaussians on ``[-1, 1]^2``.

    The forward problem carries the corner bumps to the centre bump;
    ``inverse=True`` swaps the densities.
    """
    grid = build_grid(n, (-1.0, 1.0))
    centre = GaussianDensity(((0.0, 0.0),), 0.2, 2.0)
    corners = QuadrantGaussianDensity(1.0, 0.2, 2.0)
    src, tgt = (centre, corners) if inverse else (corners, centre)
    rho_x = sample_source(src, square_mask(-1.0, 1.0), grid)
    shape = build_target(square_points(-1.0, 1.0), n_dirs, ordered=True)
    prob = _problem(grid, rho_x, tgt, shape, **kw)
    return Experiment("inverse" if inverse else "forward", prob, None)


def pogorelov(n: int = 256, n_d: int = 3, seed: int = 0, n_dirs: int = 256, spread: float = 0.7,
              radius: float = 1.0, n_boundary: int = 2048, **kw) -> Experiment:
    """Diracs in ``[-spread, spread]^2`` carried onto a uniform disc.

    The Dirac side is the source, so the smooth density sits on the target.
    Positions are drawn on distinct grid points with a seeded generator.
    """
    grid = build_grid(n, (-1.0, 1.0))
    rng = np.random.default_rng(seed)
    k = int(np.floor(spread / grid.dx))
    centre = grid.n // 2
    cand = np.arange(centre - k, centre + k + 1)
    flat = rng.choice(len(cand) ** 2, size=n_d, replace=False)
    ij = np.column_stack([cand[flat // len(cand)], cand[flat % len(cand)]])
    ys = grid.coords[ij]
    shape = build_target(disc_points(radius=radius, m=n_boundary), n_dirs, ordered=True)
    mass = ConstantDensity(1.0)
    m = target_mass(mass, shape)
    rho_x, idx = dirac_source(grid, ys, m)
    prob = _problem(grid, rho_x, mass, shape, **kw)
    meta = {"ys": ys, "dirac_index": idx, "weights": np.full(n_d, m / n_d), "radius": radius,
            "outside_convergence_theory": True}
    return Experiment("pogorelov", prob, None, meta)


def cshape(n: int = 64, n_dirs: int = 64, **kw) -> Experiment:
    """Non-convex C-shaped source onto the unit disc (no exact solution)."""
    grid = build_grid(n, (-1.0, 1.0))
    rho_x = sample_source(lambda x: np.ones(x.shape[:-1]), c_shape_mask(), grid)
    shape = build_target(disc_points(radius=1.0, m=1024), n_dirs, ordered=True)
    prob = _problem(grid, rho_x, ConstantDensity(1.0), shape, **kw)
    return Experiment("cshape", prob, None)


BUILDERS = {
    "square": square,
    "ellipse": ellipse,
    "split": split,
    "forward": gaussian,
    "inverse": lambda n=64, **kw: gaussian(n, inverse=True, **kw),
    "pogorelov": pogorelov,
    "cshape": cshape,
}


def build(name: str, n: int, **kw) -> Experiment:
    try:
        return BUILDERS[name](n=n, **kw)
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(BUILDERS)}") from None


# -- running --------------------------------------------------------------


def run(exp: Experiment, cfg: SolverConfig | None = None) -> dict:
    """Solve and collect errors; returns a flat result dict including the potential."""
    cfg = cfg or SolverConfig()
    prob = exp.problem
    t0 = time.perf_counter()
    u, rep = solve(cfg, prob)
    out = {"u": u, "report": rep, "time": time.perf_counter() - t0, "n": prob.grid.n,
           "n_dirs": prob.shape.n_dirs, "iterations": rep.iterations}
    if exp.exact is not None:
        mx, l2 = map_error(transport_map(u, prob.grid), exp.exact, prob.grid, prob.mask)
        out.update(max_error=mx, l2_error=l2)
    return out


def pogorelov_result(exp: Experiment, u, n_cells_grid: int = 1024):
    """Cell areas of the reconstructed piecewise-affine potential on the target disc."""
    meta = exp.meta
    v = np.asarray(u).ravel()[meta["dirac_index"]]
    r = meta["radius"]
    fine = build_grid(n_cells_grid, (-r, r))
    return pogorelov_cells(v, fine, meta["ys"], meta["weights"], disc_mask(radius=r)(fine.points()))


def inverse_study(n: int, cfg: SolverConfig | None = None, **kw) -> dict:
    """Forward and inverse Gaussian problems and the distance between the two maps."""
    fwd, inv = gaussian(n, **kw), gaussian(n, inverse=True, **kw)
    rf, ri = run(fwd, cfg), run(inv, cfg)
    d = inverse_consistency(rf["u"], ri["u"], fwd.problem.grid, inv.problem.grid)
    return {"n": n, "distance": d, "iterations_forward": rf["iterations"],
            "iterations_inverse": ri["iterations"], "time": rf["time"] + ri["time"]}


def convergence_study(name: str, sizes, cfg: SolverConfig | None = None, **kw) -> list[dict]:
    """One row per grid size with error, iterations, time and the observed order."""
    rows = []
    for n in sizes:
        if name == "inverse":
            res = inverse_study(n, cfg, **kw)
            row = {"n": n, "error": res["distance"], "iterations": res["iterations_forward"],
                   "time": res["time"]}
        elif name == "pogorelov":
            exp = build(name, n, **kw)
            res = run(exp, cfg)
            cells = pogorelov_result(exp, res["u"])
            row = {"n": n, "error": cells.linf_error, "l2_error": cells.l2_error,
                   "iterations": res["iterations"], "time": res["time"]}
        else:
            res = run(build(name, n, **kw), cfg)
            row = {"n": n, "error": res.get("max_error", float("nan")),
                   "l2_error": res.get("l2_error", float("nan")),
                   "iterations": res["iterations"], "time": res["time"]}
        if rows and np.isfinite(row["error"]) and rows[-1]["error"] > 0:
            row["order"] = float(np.log(rows[-1]["error"] / row["error"]) / np.log(n / rows[-1]["n"]))
        else:
            row["order"] = float("nan")
        rows.append(row)
    return rows
