import numpy as np
import pytest

from safem.problems import check_source, get_problem, problem_corner2d, problem_drift2d, problem_peak2d


def test_peak_values():
    p = problem_peak2d()
    assert p.exact(0.0, 0.5) == 0.0
    assert p.exact(0.5, 0.117) == pytest.approx(0.25 * 0.117 * 0.883, rel=1e-12)
    assert p.exact(0.5, 0.117) == pytest.approx(0.02582775, abs=1e-8)
    assert p.beta == (0.0, 0.0)


def test_corner_values():
    p = problem_corner2d()
    r = np.array([0.3, 0.7, 1.0])
    assert np.allclose(p.exact(0 * r, r), 0.0, atol=1e-15)  # theta = pi/2
    assert np.allclose(p.exact(r, -1e-300 + 0 * r), 0.0, atol=1e-15)  # theta -> 2 pi
    assert p.exact(-1.0, 0.0) == pytest.approx(np.sqrt(3) / 2)
    assert p.exact(0.0, 0.0) == 0.0
    assert p.initial_mesh().active_cell_count == 48


@pytest.mark.parametrize("beta", [1.0, 10.0, 50.0])
def test_drift_values(beta):
    p = problem_drift2d(beta)
    assert p.exact(0.0, 0.0) == pytest.approx(0.0, abs=1e-14)
    assert p.beta == (beta, beta)
    assert np.isfinite(p.exact(1.0, 1.0))
    if beta == 1.0:
        assert p.exact(1.0, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_drift_rejects_nonpositive():
    with pytest.raises(ValueError):
        problem_drift2d(0.0)


@pytest.mark.parametrize("name", ["peak2d", "corner2d", "drift2d", "sine2d"])
def test_finite_difference_check(name):
    assert check_source(get_problem(name, beta=10.0)) < 1e-4


def test_check_source_catches_wrong_forcing():
    p = problem_peak2d()
    p.source = lambda x, y: np.zeros_like(x)
    with pytest.raises(ValueError):
        check_source(p)


def test_unknown_problem():
    with pytest.raises(ValueError):
        get_problem("nope")


def test_default_meshes():
    assert get_problem("peak2d").initial_mesh().active_cell_count == 16
    assert get_problem("drift2d").initial_mesh().active_cell_count == 16
    assert get_problem("peak2d", initial_subdivisions=2).initial_mesh().active_cell_count == 4
