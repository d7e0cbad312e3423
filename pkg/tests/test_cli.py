import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from monge_ot import __version__
from monge_ot.cli import THREADS_ENV, main, mesh_polylines
from monge_ot.grid import build_grid

SQUARE = """\
experiment:
  name: square
grid:
  n: 32
solver:
  tol: 1.0e-8
output:
  mesh_stride: 4
"""

CLOUD = """\
grid:
  n: 33
  bounds: [-1, 1]
source:
  density: constant
  support: {shape: disc, params: {radius: 0.8}}
target:
  points_file: cloud.txt
  n_dirs: 32
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture
def square_run(tmp_path):
    cfg = write(tmp_path, "sq.yaml", SQUARE)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_solve_writes_artifacts(square_run):
    u = read_rows(square_run / "u.csv")
    assert u[0] == ["i", "j", "x1", "x2", "u"]
    assert len(u) == 1 + 32 * 32
    m = read_rows(square_run / "map.csv")
    assert m[0] == ["i", "j", "m1", "m2"]
    assert len(m) == 1 + 32 * 32
    mesh = read_rows(square_run / "mesh.csv")
    assert mesh[0] == ["polyline_id", "x", "y"]
    rep = json.loads((square_run / "report.json").read_text())
    assert rep["converged"] is True
    assert rep["iterations"] == len(rep["residual_history"]) - 1
    assert set(rep["parameters"]) >= {"delta", "eps", "n", "n_dirs"}
    assert rep["parameters"]["n"] == 32 and rep["parameters"]["n_dirs"] == 16
    assert rep["errors"]["max"] == pytest.approx(0.0220, rel=0.05)


def test_solve_is_deterministic(tmp_path, square_run):
    cfg = write(tmp_path, "sq2.yaml", SQUARE)
    out = tmp_path / "again"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("u.csv", "map.csv", "mesh.csv", "report.json"):
        assert (out / name).read_bytes() == (square_run / name).read_bytes()


def test_mesh_lines_and_stride(square_run):
    rows = read_rows(square_run / "mesh.csv")[1:]
    ids = sorted({int(r[0]) for r in rows})
    # lines 0, 4, ..., 28 and 31 in both families
    assert len(ids) == 2 * 9
    grid = build_grid(5)
    X1, X2 = grid.mesh()
    lines = mesh_polylines((X1, X2), grid, 1)
    assert len(lines) == 10
    assert lines[0] == pytest.approx(np.column_stack([X1[0], X2[0]]))
    with pytest.raises(ValueError):
        mesh_polylines((X1, X2), grid, 0)


def test_point_cloud_target(tmp_path):
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    np.savetxt(tmp_path / "cloud.txt", 0.5 * np.column_stack([np.cos(t), np.sin(t)]), header="unit-half disc")
    cfg = write(tmp_path, "cloud.yaml", CLOUD)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["experiment"] == "custom"


def test_malformed_config_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, "bad.yaml", "grid:\n  n: 32\nsolver:\n  tol: -1\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "solver.tol" in err and "line 4" in err


def test_broken_yaml(tmp_path, capsys):
    cfg = write(tmp_path, "bad.yaml", "grid: [1, 2\n")
    assert main(["solve", "--config", str(cfg)]) == 2
    assert "line" in capsys.readouterr().err


def test_missing_points_file(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", CLOUD)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "points_file" in capsys.readouterr().err


def test_study_table(tmp_path, capsys):
    assert main(["study", "--experiment", "square", "--sizes", "16,32", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "table.csv")
    assert rows[0] == ["n", "error", "l2_error", "order", "iterations", "time"]
    assert [r[0] for r in rows[1:]] == ["16", "32"]
    assert 0.7 < float(rows[2][3]) < 1.3
    assert "order" in capsys.readouterr().out


def test_study_rejects_bad_input(tmp_path):
    assert main(["study", "--experiment", "square", "--sizes", "a,b", "--out", str(tmp_path)]) == 2
    assert main(["study", "--experiment", "nope", "--sizes", "16", "--out", str(tmp_path)]) == 2


def test_version(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_thread_variable(monkeypatch, capsys):
    monkeypatch.setenv(THREADS_ENV, "zero")
    assert main(["version"]) == 2
    assert THREADS_ENV in capsys.readouterr().err
    monkeypatch.setenv(THREADS_ENV, "1")
    assert main(["version"]) == 0


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "monge_ot", "version"], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == __version__
