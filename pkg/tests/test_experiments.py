import numpy as np
import pytest

from monge_ot.experiments import EXPERIMENTS, build, convergence_study, pogorelov_result, run


def test_square_at_32_matches_reference():
    res = run(build("square", 32))
    assert res["report"].converged
    assert res["max_error"] == pytest.approx(0.0220, rel=0.05)
    assert res["iterations"] <= 10


def test_study_rows_and_order():
    rows = convergence_study("square", [16, 32])
    assert [r["n"] for r in rows] == [16, 32]
    assert np.isnan(rows[0]["order"])
    assert 0.8 <= rows[1]["order"] <= 1.2


def test_unknown_experiment():
    with pytest.raises(ValueError, match="unknown experiment"):
        build("hexagon", 16)


@pytest.mark.parametrize("name", [e for e in EXPERIMENTS if e not in ("pogorelov",)])
def test_builders_produce_consistent_problems(name):
    exp = build(name, 24)
    prob = exp.problem
    assert prob.grid.n == 24
    assert prob.pair.rho_x.shape == prob.grid.shape
    assert np.all(prob.pair.rho_x >= 0) and prob.pair.rho_x.sum() > 0


def test_pogorelov_setup_places_diracs_on_grid():
    exp = build("pogorelov", 32, n_d=5, seed=3)
    prob = exp.problem
    idx = exp.meta["dirac_index"]
    assert len(set(idx.tolist())) == 5
    assert np.count_nonzero(prob.pair.rho_x) == 5
    assert prob.grid.points()[idx] == pytest.approx(exp.meta["ys"])
    # weights share the disc's mass equally
    assert exp.meta["weights"].sum() == pytest.approx(np.pi, rel=1e-3)


def test_pogorelov_cells_from_exact_planes():
    exp = build("pogorelov", 32, n_d=1)
    ys = exp.meta["ys"]
    X1, X2 = exp.problem.grid.mesh()
    u = X1 * ys[0, 0] + X2 * ys[0, 1]
    cells = pogorelov_result(exp, u, n_cells_grid=256)
    assert cells.n_cells == 1
    assert cells.linf_error < 1.0
