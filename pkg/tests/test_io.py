import numpy as np
import pytest

from safem.driver import iterate_cycles, run, RunConfig
from safem.io import CSV_HEADER, read_csv, read_vtk_counts, write_csv, write_mesh_vtk, write_vtk
from safem.mesh import create_lshape_mesh
from safem.problems import problem_peak2d


@pytest.fixture(scope="module")
def records():
    return run(RunConfig(problem_peak2d(), cycles=2, mode="safem", diagnostic=True))


def test_csv_header_and_rows(tmp_path, records):
    path = write_csv(records, tmp_path / "out.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0] == (
        "cycle,n_cells,n_dofs,mode,smoother,smoothing_steps,error_h1,estimator_J,"
        "estimator_J_exact,solver_iterations,matvec_count,solve_seconds,marked_cells"
    )
    assert lines[0].split(",") == CSV_HEADER


def test_csv_roundtrip(tmp_path, records):
    path = write_csv(records, tmp_path / "a" / "out.csv")
    assert read_csv(path) == records


def test_csv_empty_exact_estimator(tmp_path):
    recs = run(RunConfig(problem_peak2d(), cycles=2))
    path = write_csv(recs, tmp_path / "out.csv")
    assert path.read_text().splitlines()[1].split(",")[8] == ""
    assert read_csv(path)[0].estimator_J_exact is None


def test_csv_errors_name_path(tmp_path, records):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_csv(records, blocker / "out.csv")
    with pytest.raises(OSError, match="missing.csv"):
        read_csv(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(bad)


def test_vtk_counts(tmp_path):
    state = list(iterate_cycles(RunConfig(problem_peak2d(), cycles=2, degree=2)))[0]
    path = write_vtk(state.space, state.u, state.estimator, state.marked, tmp_path / "s.vtk")
    counts = read_vtk_counts(path)
    n = len(state.space.cells)
    assert counts["CELLS"] == counts["CELL_TYPES"] == counts["CELL_DATA"] == n
    assert counts["POINTS"] == counts["POINT_DATA"] == len(state.space.mesh.vertices)
    assert counts["SCALARS"] == ["solution", "level", "eta", "marked"]
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    # every cell type is a quad
    body = text.split("CELL_TYPES")[1].split("POINT_DATA")[0].split()[1:]
    assert set(body) == {"9"}


def test_vtk_solution_values(tmp_path):
    state = list(iterate_cycles(RunConfig(problem_peak2d(), cycles=2)))[0]
    path = write_vtk(state.space, state.u, path=tmp_path / "s.vtk")
    lines = path.read_text().splitlines()
    start = lines.index("LOOKUP_TABLE default") + 1
    values = np.array([float(v) for v in lines[start : start + len(state.space.mesh.vertices)]])
    # Q1: vertex values are the coefficients at those points
    idx = [int(np.flatnonzero(np.all(np.isclose(state.space.support_points, v), axis=1))[0]) for v in state.space.mesh.vertices]
    assert np.allclose(values, state.u[idx])


def test_mesh_vtk(tmp_path):
    counts = read_vtk_counts(write_mesh_vtk(create_lshape_mesh(), tmp_path / "m.vtk"))
    assert counts["CELLS"] == 3 and counts["POINTS"] == 8
