"""Command-line front end.

    monge-ot solve --config problem.yaml [--out DIR]
    monge-ot study --experiment square --sizes 32,64,128
    monge-ot version

The thread count for numerical libraries is read from ``MONGE_OT_THREADS``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import __version__
from . import density as dens
from .experiments import BUILDERS, Experiment, build, convergence_study, pogorelov_result
from .grid import build_grid
from .problem import OTProblem
from .scheme import SchemeParams
from .solvers import SolverConfig, SolverError, solve
from .target import build_target, disc_points, ellipse_points, read_point_cloud, square_points
from .validation import map_error, square_source_density, transport_map

THREADS_ENV = "MONGE_OT_THREADS"
ARTIFACTS = ("u", "map", "report", "mesh")

log = logging.getLogger("monge_ot")


class ConfigError(ValueError):
    """Invalid problem configuration; the message names the offending field."""


# -- configuration --------------------------------------------------------


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such file")
    try:
        cfg = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}: malformed YAML{where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg["_base"] = str(path.parent)
    cfg["_lines"] = key_lines(yaml.compose(path.read_text()))
    return cfg


def key_lines(node, prefix: str = "") -> dict:
    """Map dotted key paths of a composed YAML tree to 1-based line numbers."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}{k.value}"
            out[key] = k.start_mark.line + 1
            out.update(key_lines(v, key + "."))
    return out


def locate(exc: ConfigError, cfg: dict | None) -> str:
    """Append the config line of the offending field, when known."""
    msg = str(exc)
    lines = (cfg or {}).get("_lines", {})
    field_ = msg.split(":", 1)[0].strip()
    while field_:
        if field_ in lines:
            return f"{msg} (line {lines[field_]})"
        field_ = field_.rpartition(".")[0]
    return msg


def _section(cfg: dict, key: str) -> dict:
    val = cfg.get(key) or {}
    if not isinstance(val, dict):
        raise ConfigError(f"{key}: expected a mapping, got {type(val).__name__}")
    return val


def _number(sec: dict, name: str, key: str, default=None, kind=float, positive=False):
    val = sec.get(key, default)
    if val is None:
        return None
    try:
        val = kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}.{key}: expected a number, got {val!r}") from None
    if positive and not val > 0:
        raise ConfigError(f"{name}.{key}: must be positive, got {val}")
    return val


def _density(spec, name: str):
    spec = spec or {"name": "constant"}
    if isinstance(spec, str):
        spec = {"name": spec}
    kind = spec.get("name", "constant")
    p = spec.get("params") or {}
    try:
        if kind == "constant":
            return dens.ConstantDensity(float(p.get("value", 1.0)))
        if kind == "gaussian":
            return dens.GaussianDensity(tuple(map(tuple, p.get("centers", [[0.0, 0.0]]))),
                                        float(p.get("sigma", 0.2)), float(p.get("base", 2.0)))
        if kind == "paper-square-f":
            return dens.FunctionDensity(square_source_density)
        if kind == "quadrant_gaussian":
            return dens.QuadrantGaussianDensity(float(p.get("corner", 1.0)), float(p.get("sigma", 0.2)),
                                                float(p.get("base", 2.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}.params: {exc}") from None
    raise ConfigError(f"{name}.name: unknown density {kind!r}")


def _support(spec, lo, hi):
    spec = spec or {"shape": "all"}
    kind = spec.get("shape", "all")
    p = spec.get("params") or {}
    if kind == "all":
        return dens.square_mask(lo, hi)
    if kind == "square":
        return dens.square_mask(float(p.get("lo", lo)), float(p.get("hi", hi)))
    if kind == "disc":
        return dens.disc_mask(p.get("center", (0.0, 0.0)), float(p.get("radius", 1.0)))
    if kind == "ellipse":
        return dens.ellipse_mask(np.asarray(p["matrix"], float), p.get("center", (0.0, 0.0)))
    if kind == "half_discs":
        return dens.half_disc_pair_mask(float(p.get("radius", 0.85)), float(p.get("left_shift", -0.2)),
                                        float(p.get("right_shift", 0.1)))
    if kind == "c_shape":
        return dens.c_shape_mask(**{k: float(v) for k, v in p.items()})
    raise ConfigError(f"source.support.shape: unknown shape {kind!r}")


def _target_points(tgt: dict, base: str) -> np.ndarray:
    if "points_file" in tgt:
        path = Path(base, tgt["points_file"])
        if not path.is_file():
            raise ConfigError(f"target.points_file: {path} does not exist")
        return read_point_cloud(path)
    shape = tgt.get("shape") or {"name": "square"}
    kind = shape.get("name", "square")
    p = shape.get("params") or {}
    if kind == "square":
        return square_points(float(p.get("lo", -0.5)), float(p.get("hi", 0.5)))
    if kind == "disc":
        return disc_points(p.get("center", (0.0, 0.0)), float(p.get("radius", 1.0)), int(p.get("m", 1024)))
    if kind == "ellipse":
        return ellipse_points(np.asarray(p["matrix"], float), p.get("center", (0.0, 0.0)), int(p.get("m", 1024)))
    raise ConfigError(f"target.shape.name: unknown shape {kind!r}")


def solver_config(cfg: dict) -> SolverConfig:
    sec = _section(cfg, "solver")
    try:
        return SolverConfig(
            method=sec.get("method", "newton"),
            tol=_number(sec, "solver", "tol", 1e-8, positive=True),
            max_iter=_number(sec, "solver", "max_iter", None, int, positive=True),
            alpha_min=_number(sec, "solver", "alpha_min", 2.0**-10, positive=True),
            globalization=sec.get("globalization", "auto"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"solver: {exc}") from None


def build_problem(cfg: dict) -> Experiment:
    """Turn a parsed configuration into an :class:`Experiment`."""
    grid_sec = _section(cfg, "grid")
    n = _number(grid_sec, "grid", "n", 64, int, positive=True)
    solver_sec = _section(cfg, "solver")
    overrides = {k: _number(solver_sec, "solver", k, None, positive=True) for k in ("delta", "eps")}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    exp_sec = cfg.get("experiment")
    if exp_sec:
        if isinstance(exp_sec, str):
            exp_sec = {"name": exp_sec}
        name = exp_sec.get("name")
        if name not in BUILDERS:
            raise ConfigError(f"experiment.name: unknown experiment {name!r}; choose from {sorted(BUILDERS)}")
        params = dict(exp_sec.get("params") or {})
        try:
            return build(name, n, **params, **overrides)
        except TypeError as exc:
            raise ConfigError(f"experiment.params: {exc}") from None

    bounds = grid_sec.get("bounds", [-0.5, 0.5])
    if not (isinstance(bounds, (list, tuple)) and len(bounds) == 2):
        raise ConfigError("grid.bounds: expected [lo, hi]")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not hi > lo:
        raise ConfigError(f"grid.bounds: need lo < hi, got {bounds}")
    grid = build_grid(n, (lo, hi))
    src = _section(cfg, "source")
    tgt = _section(cfg, "target")
    dspec = src.get("density") or {}
    if isinstance(dspec, dict) and dspec.get("name") == "dirac-list":
        pts = (dspec.get("params") or {}).get("points")
        if not pts:
            raise ConfigError("source.density.params.points: dirac-list needs a list of [y1, y2] points")
        rho_x = None
    else:
        rho_x = dens.sample_source(_density(dspec, "source.density"), _support(src.get("support"), lo, hi), grid)
    n_dirs = _number(tgt, "target", "n_dirs", 64, int, positive=True)
    try:
        shape = build_target(_target_points(tgt, cfg.get("_base", ".")), n_dirs)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"target: {exc}") from None
    rho_y = _density(tgt.get("density"), "target.density")
    if rho_x is None:
        rho_x, _ = dens.dirac_source(grid, np.asarray(pts, float), dens.target_mass(rho_y, shape))
    pair = dens.make_pair(rho_x, rho_y, shape, grid,
                          rho0=_number(tgt, "target", "rho0", None, positive=True))
    params = SchemeParams.default(grid, pair, overrides.get("delta"), overrides.get("eps"))
    return Experiment("custom", OTProblem(grid, pair, shape, params, rho_x > 0))


# -- outputs --------------------------------------------------------------


def write_potential(path, u, grid):
    X1, X2 = grid.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x1", "x2", "u"])
        for i in range(grid.n):
            for j in range(grid.n):
                w.writerow([i, j, repr(float(X1[i, j])), repr(float(X2[i, j])), repr(float(u[i, j]))])


def write_map(path, m, grid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "m1", "m2"])
        for i in range(grid.n):
            for j in range(grid.n):
                w.writerow([i, j, repr(float(m[0][i, j])), repr(float(m[1][i, j]))])


def mesh_polylines(m, grid, stride: int) -> list[np.ndarray]:
    """Images of every ``stride``-th grid line (both families, boundary lines always included)."""
    if stride < 1:
        raise ValueError("stride must be at least 1")
    lines = sorted(set(range(0, grid.n, stride)) | {grid.n - 1})
    M = np.stack(m, axis=-1)
    return [M[k, :, :] for k in lines] + [M[:, k, :] for k in lines]


def emit_mesh_image(m, grid, stride: int, path) -> Path:
    """Write the mapped grid lines as ``polyline_id,x,y`` rows."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["polyline_id", "x", "y"])
        for pid, line in enumerate(mesh_polylines(m, grid, stride)):
            for x, y in line:
                w.writerow([pid, repr(float(x)), repr(float(y))])
    return path


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def make_report(exp: Experiment, u, rep, m) -> dict:
    prob = exp.problem
    out = {
        "experiment": exp.name,
        "method": rep.method,
        "converged": rep.converged,
        "iterations": rep.iterations,
        "residual_history": rep.residual_history,
        "damping": rep.damping,
        "parameters": {"delta": prob.params.delta, "eps": prob.params.eps, "n": prob.grid.n,
                       "n_dirs": prob.shape.n_dirs, "bounds": [prob.grid.lo, prob.grid.hi]},
        "errors": None,
    }
    if exp.exact is not None:
        mx, l2 = map_error(m, exp.exact, prob.grid, prob.mask)
        out["errors"] = {"max": mx, "l2": l2}
    if exp.name == "pogorelov":
        cells = pogorelov_result(exp, u)
        out["errors"] = {"cell_area_linf_percent": cells.linf_error, "cell_area_l2_percent": cells.l2_error}
        out["cells"] = {"count": cells.n_cells, "areas": cells.cell_areas, "v": cells.v}
        out["outside_convergence_theory"] = True
    cont = rep.extra.get("continuation")
    if cont:
        out["continuation"] = cont
    return _json_safe(out)


# -- commands -------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = None
    try:
        cfg = load_config(args.config)
        scfg = solver_config(cfg)
        exp = build_problem(cfg)
    except ConfigError as exc:
        print(f"error: {locate(exc, cfg)}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_sec = _section(cfg, "output")
    out = Path(args.out or out_sec.get("directory", "out"))
    out.mkdir(parents=True, exist_ok=True)
    artifacts = out_sec.get("artifacts", list(ARTIFACTS))
    unknown = set(artifacts) - set(ARTIFACTS)
    if unknown:
        print(f"error: output.artifacts: unknown entries {sorted(unknown)}", file=sys.stderr)
        return 2
    try:
        u, rep = solve(scfg, exp.problem)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    grid = exp.problem.grid
    m = transport_map(u, grid)
    report = make_report(exp, u, rep, m)
    if "u" in artifacts:
        write_potential(out / "u.csv", u, grid)
    if "map" in artifacts:
        write_map(out / "map.csv", m, grid)
    if "mesh" in artifacts:
        emit_mesh_image(m, grid, int(out_sec.get("mesh_stride", max(1, grid.n // 16))), out / "mesh.csv")
    if "report" in artifacts:
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    err = report.get("errors") or {}
    print(f"{exp.name}: n={grid.n} iterations={rep.iterations} converged={rep.converged}"
          + "".join(f" {k}={v:.4g}" for k, v in err.items()))
    return 0 if rep.converged else 1


def cmd_study(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        print(f"error: --sizes: expected comma-separated integers, got {args.sizes!r}", file=sys.stderr)
        return 2
    name = args.experiment
    if name not in BUILDERS and name != "inverse":
        print(f"error: --experiment: unknown experiment {name!r}", file=sys.stderr)
        return 2
    kw = {"n_dirs": args.n_dirs} if args.n_dirs else {}
    try:
        rows = convergence_study(name, sizes, **kw)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    cols = ["n", "error", "l2_error", "order", "iterations", "time"]
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r.get(c, "") for c in cols])
    print(f"{'n':>6} {'error':>10} {'order':>7} {'iters':>6} {'time(s)':>8}")
    for r in rows:
        print(f"{r['n']:>6} {r['error']:>10.4g} {r['order']:>7.3f} {r['iterations']:>6} {r['time']:>8.2f}")
    return 0


def cmd_version(args) -> int:
    print(__version__)
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monge-ot", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve one configured problem")
    p.add_argument("--config", required=True, help="YAML problem description")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("study", help="grid-refinement study of a named experiment")
    p.add_argument("--experiment", required=True, help=f"one of {', '.join(sorted(BUILDERS))}")
    p.add_argument("--sizes", default="32,64,128", help="comma-separated grid sizes")
    p.add_argument("--n-dirs", type=int, default=None, help="support-function directions")
    p.add_argument("--out", help="directory for table.csv")
    p.set_defaults(func=cmd_study)
    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=cmd_version)
    return ap


def thread_limit() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}: expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV}: expected a positive integer, got {raw!r}")
    return n


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        threads = thread_limit()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with threadpool_limits(limits=threads):
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
