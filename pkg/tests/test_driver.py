import dataclasses
import math

import numpy as np
import pytest

from safem.assembly import gauss_rule
from safem.driver import (
    MarkingError,
    RunConfig,
    error_h1,
    error_propagation_probe,
    graded_rule,
    iterate_cycles,
    run,
    seminorm_h1,
    stagnation_study,
)
from safem.estimate_mark import MarkingConfig
from safem.fespace import build_space, interpolate
from safem.mesh import create_unit_square_mesh
from safem.problems import problem_corner2d, problem_drift2d, problem_peak2d, problem_sine2d

PEAK = problem_peak2d()


def test_error_h1_examples():
    space = build_space(create_unit_square_mesh(3), 1)
    u = interpolate(space, lambda x, y: x)
    grad = lambda x, y: np.stack([np.ones_like(x), np.zeros_like(y)], axis=-1)  # noqa: E731
    assert error_h1(space, u, grad, quad=gauss_rule(3)) < 1e-12

    space = build_space(create_unit_square_mesh(1), 1)
    u = interpolate(space, lambda x, y: x**2)
    grad = lambda x, y: np.stack([2 * x, np.zeros_like(y)], axis=-1)  # noqa: E731
    assert error_h1(space, u, grad, quad=gauss_rule(3)) == pytest.approx(math.sqrt(1 / 3), rel=1e-12)


def test_error_h1_first_order():
    p = problem_sine2d()
    errs = []
    for n in (8, 16, 32):
        space = build_space(create_unit_square_mesh(n), 1)
        errs.append(error_h1(space, interpolate(space, p.exact), p))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.02)


def test_graded_rule_integrates_singular_corner():
    pts, w = graded_rule(gauss_rule(6), (0.0, 0.0))
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    r = np.hypot(*pts.T)
    assert w @ r ** (-2 / 3) == pytest.approx(_r_power_integral(-2 / 3), rel=1e-8)


def _r_power_integral(a):
    """Integral of r^a over [0,1]^2, by symmetry twice the triangle 0 < y < x < 1."""
    from scipy.integrate import quad

    # int_0^{pi/4} int_0^{1/cos t} r^(a+1) dr dt
    val, _ = quad(lambda t: np.cos(t) ** (-(a + 2)) / (a + 2), 0, np.pi / 4, epsabs=1e-14, epsrel=1e-14)
    return 2 * val


def test_seminorm_of_linear():
    space = build_space(create_unit_square_mesh(2), 2)
    assert seminorm_h1(space, interpolate(space, lambda x, y: 3 * x - 4 * y)) == pytest.approx(5.0)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(PEAK, cycles=1)
    with pytest.raises(ValueError):
        RunConfig(PEAK, mode="safem", smoothing_steps=0)
    with pytest.raises(ValueError):
        RunConfig(PEAK, mode="fast")
    with pytest.raises(ValueError):
        RunConfig(PEAK, smoother="jacobi")
    assert RunConfig(PEAK).marking == MarkingConfig("dorfler", theta=0.3)
    assert RunConfig(PEAK, degree=2).marking == MarkingConfig("fixed_fraction", fraction=1 / 3)
    RunConfig(PEAK, mode="afem", smoothing_steps=0)


def _algebraic_fields(r):
    d = dataclasses.asdict(r)
    for key in ("mode", "smoother", "smoothing_steps", "solve_seconds", "diagnostics"):
        d.pop(key)
    return d


def test_two_cycles_afem_equals_safem():
    a = run(RunConfig(PEAK, cycles=2, mode="afem"))
    s = run(RunConfig(PEAK, cycles=2, mode="safem"))
    assert [_algebraic_fields(r) for r in a] == [_algebraic_fields(r) for r in s]


def test_records_and_error_decrease():
    recs = run(RunConfig(PEAK, cycles=10, mode="afem"))
    assert len(recs) == 10
    n = [r.n_dofs for r in recs]
    assert all(b > a for a, b in zip(n, n[1:]))
    assert recs[-1].error_h1 < 0.25 * recs[0].error_h1
    assert recs[-1].marked_cells == 0 and all(r.marked_cells > 0 for r in recs[:-1])
    assert all(r.estimator_J_exact is None for r in recs)
    J = [r.estimator_J for r in recs]
    assert sum(b < a for a, b in zip(J, J[1:])) >= 8


def test_safem_final_error_close_to_afem():
    a = run(RunConfig(PEAK, mode="afem"))
    s = run(RunConfig(PEAK, mode="safem", smoother="richardson", smoothing_steps=3))
    assert abs(s[-1].error_h1 - a[-1].error_h1) <= 0.2 * a[-1].error_h1
    assert all(r.solver_iterations == 3 for r in s[1:-1])
    assert all(r.diagnostics["setup_matvecs"] == 21 for r in s[1:-1])


def test_diagnostic_does_not_change_marking():
    plain = run(RunConfig(PEAK, cycles=6, mode="safem"))
    diag = run(RunConfig(PEAK, cycles=6, mode="safem", diagnostic=True))
    for a, b in zip(plain, diag):
        assert (a.n_dofs, a.marked_cells, a.estimator_J, a.error_h1) == (b.n_dofs, b.marked_cells, b.estimator_J, b.error_h1)
        assert b.estimator_J_exact is not None


def test_estimator_bound_with_empirical_constants():
    for problem in (PEAK, problem_corner2d()):
        for r in run(RunConfig(problem, mode="safem", diagnostic=True)):
            alg = r.diagnostics["algebraic_error_h1"]
            assert r.estimator_J**2 <= 10 * r.estimator_J_exact**2 + 10 * alg**2


def test_empty_marking_aborts():
    with pytest.raises(MarkingError):
        run(RunConfig(PEAK, cycles=3, marking=MarkingConfig("dorfler", theta=0.0)))


def test_drift_run_uses_gmres():
    recs = run(RunConfig(problem_drift2d(10.0), cycles=3, mode="safem", smoother="gmres", smoothing_steps=5))
    assert recs[0].smoother == "gmres"
    assert all(np.isfinite(r.error_h1) for r in recs)


def test_states_expose_solution():
    states = list(iterate_cycles(RunConfig(PEAK, cycles=3, mode="safem", diagnostic=True)))
    assert [s.tight for s in states] == [True, False, True]
    assert states[1].omega > 0 and states[0].omega is None
    for s in states:
        assert s.constraints.is_satisfied(s.u)
        assert len(s.u) == s.record.n_dofs


def test_error_propagation_probe():
    assert max(error_propagation_probe(PEAK, levels=3, steps=3)) <= 1e-10


def test_stagnation_study_shape():
    rows = stagnation_study(PEAK, cycle=3, max_steps=8)
    assert [r[0] for r in rows] == list(range(1, 9))
    assert all(r[1] > 0 and r[2] > 0 for r in rows)
    with pytest.raises(ValueError):
        stagnation_study(PEAK, cycle=1)
