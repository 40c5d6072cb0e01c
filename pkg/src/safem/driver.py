"""
AFEM and S-AFEM outer loops.

Both loops run SOLVE -> ESTIMATE -> MARK -> REFINE for a fixed number of
cycles. AFEM solves every discrete system tightly. S-AFEM does so only on
the first and last cycle; in between it prolongs the previous approximation
to the new mesh and applies a few smoothing steps, which is enough for the
estimator to pick the right cells.
"""
from dataclasses import dataclass, field, replace
import math
import time

import numpy as np

from .assembly import assemble_system, composite_rule, gauss_rule
from .estimate_mark import MarkingConfig, jump_estimator, mark
from .fespace import build_constraints, build_space, shape_functions
from .mesh import refine
from .problems import ProblemSpec
from .solvers import (
    RichardsonConfig,
    SolverBreakdown,
    cg,
    estimate_spectral_radius,
    gmres,
    jacobi,
    richardson,
)
from .transfer import build_prolongation, prolong

__all__ = [
    "MarkingError",
    "RunConfig",
    "CycleRecord",
    "CycleState",
    "default_marking",
    "error_h1",
    "seminorm_h1",
    "graded_rule",
    "iterate_cycles",
    "run",
    "stagnation_study",
    "error_propagation_probe",
    "richardson_propagator",
]

MODES = ("afem", "safem")
SMOOTHERS = ("richardson", "cg", "gmres")
POWER_ITERATIONS = 20
SMOOTHER_RESTART = 30
SOLVER_RESTART = 50
# Load vectors and error norms use 6x6 Gauss points on each of 4x4 sub-squares.
# Plain Gauss leaves quadrature errors around 1e-6 relative in the error
# decomposition on the coarse peak meshes.
ACCURATE_RULE = composite_rule(6, 4)


class MarkingError(RuntimeError):
    """No cell was marked although further cycles were requested."""


def default_marking(degree):
    """Dorfler with theta = 0.3 for Q1, one third of the cells for higher degree."""
    if degree == 1:
        return MarkingConfig("dorfler", theta=0.3)
    return MarkingConfig("fixed_fraction", fraction=1.0 / 3.0)


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    degree: int = 1
    cycles: int = 10
    mode: str = "afem"
    smoother: str = "richardson"
    smoothing_steps: int = 3
    marking: MarkingConfig | None = None
    tolerance: float = 1e-12
    diagnostic: bool = False

    def __post_init__(self):
        if self.degree not in (1, 2, 3):
            raise ValueError(f"degree must be 1, 2 or 3, got {self.degree}")
        if self.cycles < 2:
            raise ValueError(f"cycles must be >= 2, got {self.cycles}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.smoother not in SMOOTHERS:
            raise ValueError(f"smoother must be one of {SMOOTHERS}, got {self.smoother!r}")
        if self.mode == "safem" and self.smoothing_steps < 1:
            raise ValueError(f"smoothing_steps must be >= 1 for safem, got {self.smoothing_steps}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.marking is None:
            object.__setattr__(self, "marking", default_marking(self.degree))

    @property
    def symmetric(self):
        return not np.any(self.problem.beta)

    @property
    def exact_solver(self):
        return "cg" if self.symmetric else "gmres"


@dataclass
class CycleRecord:
    """One row of the per-cycle CSV. ``diagnostics`` is not written out."""

    cycle: int
    n_cells: int
    n_dofs: int
    mode: str
    smoother: str
    smoothing_steps: int
    error_h1: float
    estimator_J: float
    estimator_J_exact: float | None
    solver_iterations: int
    matvec_count: int
    solve_seconds: float
    marked_cells: int
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def same_values(self, other):
        """Equality ignoring wall time."""
        return replace(self, solve_seconds=0.0) == replace(other, solve_seconds=0.0)


@dataclass
class CycleState:
    """Everything produced on one cycle; used by probes and VTK output."""

    cycle: int
    space: object
    constraints: object
    system: object
    u: np.ndarray
    initial_guess: np.ndarray
    u_exact: np.ndarray | None
    estimator: object
    marked: np.ndarray
    tight: bool
    omega: float | None
    record: CycleRecord


# -- error norms --------------------------------------------------------------


def graded_rule(base, target, depth=24):
    """Composite rule on [0, 1]^2 refined geometrically towards ``target``.

    Sub-squares closer to ``target`` than their own size are split, down to
    ``depth`` levels, so integrands with a point singularity are captured.
    """
    target = np.asarray(target, dtype=float)
    leaves = []
    stack = [(0.0, 0.0, 1.0, 0)]
    while stack:
        ox, oy, s, d = stack.pop()
        dx = max(ox - target[0], 0.0, target[0] - ox - s)
        dy = max(oy - target[1], 0.0, target[1] - oy - s)
        if d < depth and math.hypot(dx, dy) < s:
            t = 0.5 * s
            stack += [(ox, oy, t, d + 1), (ox + t, oy, t, d + 1), (ox, oy + t, t, d + 1), (ox + t, oy + t, t, d + 1)]
        else:
            leaves.append((ox, oy, s))
    leaves = np.array(leaves)
    pts = leaves[:, None, :2] + leaves[:, None, 2:] * base.points[None]
    w = (leaves[:, 2:] ** 2 * base.weights[None]).ravel()
    return pts.reshape(-1, 2), w


def _discrete_gradients(space, u, cells, ref_points):
    """Gradient of u at reference points shared by all ``cells``; shape (n, q, 2)."""
    _, dphi = shape_functions(space.degree, ref_points)
    coef = np.asarray(u)[space.cell_dofs[space.cell_row[cells]]]
    h = space.mesh.cell_size(cells)
    return np.einsum("qkd,nk->nqd", dphi, coef) / h[:, None, None]


def _gradient_of(exact):
    if callable(exact) and not isinstance(exact, ProblemSpec):
        return exact, None
    return exact.gradient, exact.singular_point


def error_h1(space, u_vec, exact, quad=None, singular_depth=24):
    """``|u - u_h|_1`` by cellwise quadrature.

    Parameters
    ----------
    space : FeSpace
    u_vec : coefficient vector with constraints applied
    exact : ProblemSpec, or a callable ``grad(x, y) -> (..., 2)``
    quad : QuadratureRule, default :data:`ACCURATE_RULE`.
    singular_depth : int
        Cells touching the problem's singular point (if any) use a graded
        rule with this many levels.
    """
    grad, singular = _gradient_of(exact)
    quad = ACCURATE_RULE if quad is None else quad
    if quad.points.shape[1] != 2:
        raise ValueError("expected a 2D quadrature rule")
    mesh = space.mesh
    cells = space.cells
    h = mesh.cell_size(cells)
    origin = mesh.cell_origin(cells)
    special = np.zeros(len(cells), dtype=bool)
    if singular is not None:
        lo = origin - np.asarray(singular)
        gap = np.maximum(np.maximum(lo, -lo - h[:, None]), 0.0)
        special = np.hypot(*gap.T) < h

    total = 0.0
    reg = cells[~special]
    if len(reg):
        gh = _discrete_gradients(space, u_vec, reg, quad.points)
        xy = mesh.cell_origin(reg)[:, None, :] + mesh.cell_size(reg)[:, None, None] * quad.points[None]
        diff = grad(xy[..., 0], xy[..., 1]) - gh
        total += float(np.einsum("nq,q,n->", (diff**2).sum(-1), quad.weights, mesh.cell_size(reg) ** 2))
    for c in cells[special]:
        hc, oc = mesh.cell_size(c), mesh.cell_origin(c)
        pts, w = graded_rule(gauss_rule(6), (np.asarray(singular) - oc) / hc, singular_depth)
        gh = _discrete_gradients(space, u_vec, np.array([c]), pts)[0]
        xy = oc + hc * pts
        diff = grad(xy[:, 0], xy[:, 1]) - gh
        total += float(hc**2 * ((diff**2).sum(-1) @ w))
    return math.sqrt(total)


def seminorm_h1(space, u_vec):
    """``|v_h|_1`` of a discrete function, integrated exactly."""
    quad = gauss_rule(space.degree + 1)
    gh = _discrete_gradients(space, u_vec, space.cells, quad.points)
    h = space.mesh.cell_size(space.cells)
    return math.sqrt(float(np.einsum("nq,q,n->", (gh**2).sum(-1), quad.weights, h**2)))


# -- solves -------------------------------------------------------------------


def _discretize(mesh, config):
    p = config.problem
    space = build_space(mesh, config.degree)
    constraints = build_constraints(space, p.boundary)
    system = assemble_system(space, constraints, p.beta, p.source, source_quad=ACCURATE_RULE)
    return space, constraints, system


def _consistent_guess(system, u):
    """Copy of ``u`` with constrained entries set to their prescribed values.

    The constrained rows of the system then have zero residual, so the
    iterations act on the free unknowns only.
    """
    x = np.array(u, dtype=float)
    c = system.constraints.constrained
    x[c] = system.rhs[c]
    return x


def _tight_solve(system, x0, config):
    A, b = system.matrix, system.rhs
    M = jacobi(A)
    if config.symmetric:
        x, rep = cg(A, b, x0, preconditioner=M, tol=config.tolerance)
    else:
        x, rep = gmres(A, b, x0, restart=SOLVER_RESTART, preconditioner=M, tol=config.tolerance)
    if not rep.converged:
        raise SolverBreakdown(
            f"{config.exact_solver} reached residual {rep.final_residual_norm:.3e} "
            f"after {rep.iterations} iterations, tolerance {config.tolerance:.1e}"
        )
    return x, rep.iterations, rep.matvecs


def richardson_weight(A, seed=0):
    """``omega = 1 / rho(A)`` from a power-iteration estimate; returns (omega, matvecs)."""
    rho = estimate_spectral_radius(A, POWER_ITERATIONS, seed=seed)
    if not rho > 0:
        raise SolverBreakdown("spectral radius estimate is not positive")
    return 1.0 / rho, POWER_ITERATIONS + 1


def _smooth(system, x0, config):
    A, b, ell = system.matrix, system.rhs, config.smoothing_steps
    if config.smoother == "richardson":
        omega, setup = richardson_weight(A)
        x, rep = richardson(A, b, x0, RichardsonConfig(omega, ell))
        return x, ell, rep.matvecs, setup, omega
    if config.smoother == "cg":
        x, rep = cg(A, b, x0, preconditioner=jacobi(A), steps=ell)
    else:
        x, rep = gmres(A, b, x0, restart=SMOOTHER_RESTART, preconditioner=jacobi(A), steps=ell)
    return x, ell, rep.matvecs, 0, None


def iterate_cycles(config):
    """Run the adaptive loop, yielding a :class:`CycleState` per cycle."""
    problem = config.problem
    mesh = problem.initial_mesh()
    prev_space = prev_u = None
    smoother_label = config.smoother if config.mode == "safem" else config.exact_solver
    steps_label = config.smoothing_steps if config.mode == "safem" else 0
    for k in range(1, config.cycles + 1):
        space, constraints, system = _discretize(mesh, config)
        if prev_space is None:
            guess = np.zeros(space.dof_count)
        else:
            guess = prolong(build_prolongation(prev_space, space), prev_u)
        x0 = _consistent_guess(system, constraints.distribute(guess))

        tight = config.mode == "afem" or k in (1, config.cycles)
        omega = None
        setup = 0
        t0 = time.perf_counter()
        if tight:
            x, iters, matvecs = _tight_solve(system, x0, config)
        else:
            x, iters, matvecs, setup, omega = _smooth(system, x0, config)
        seconds = time.perf_counter() - t0
        u = constraints.distribute(x)
        if not np.all(np.isfinite(u)):
            raise SolverBreakdown(f"non-finite iterate on cycle {k}")

        est = jump_estimator(space, u)
        err = error_h1(space, u, problem)
        J_exact = None
        u_exact = None
        # products spent estimating omega; matvec_count covers the iteration only
        diagnostics = {"setup_matvecs": setup}
        if config.diagnostic:
            u_exact = u if tight else constraints.distribute(_tight_solve(system, x0, config)[0])
            J_exact = est.global_J if tight else jump_estimator(space, u_exact).global_J
            diagnostics["error_h1_exact"] = err if tight else error_h1(space, u_exact, problem)
            diagnostics["algebraic_error_h1"] = 0.0 if tight else seminorm_h1(space, u - u_exact)

        last = k == config.cycles
        marked = np.empty(0, dtype=np.int64) if last else mark(est, config.marking)
        if not last and len(marked) == 0:
            raise MarkingError(f"no cells marked on cycle {k} of {config.cycles}")
        record = CycleRecord(
            cycle=k,
            n_cells=len(space.cells),
            n_dofs=space.dof_count,
            mode=config.mode,
            smoother=smoother_label,
            smoothing_steps=steps_label,
            error_h1=err,
            estimator_J=est.global_J,
            estimator_J_exact=J_exact,
            solver_iterations=int(iters),
            matvec_count=int(matvecs),
            solve_seconds=seconds,
            marked_cells=len(marked),
            diagnostics=diagnostics,
        )
        yield CycleState(k, space, constraints, system, u, x0, u_exact, est, marked, tight, omega, record)
        if not last:
            mesh = refine(mesh, marked)
            prev_space, prev_u = space, u


def run(config, on_cycle=None):
    """All cycle records of one run; ``on_cycle(state)`` is called per cycle."""
    records = []
    for state in iterate_cycles(config):
        if on_cycle is not None:
            on_cycle(state)
        records.append(state.record)
    return records


# -- experiments --------------------------------------------------------------


def stagnation_study(problem, cycle=3, max_steps=30, degree=1, marking=None):
    """Richardson history on the mesh of ``cycle`` of an AFEM run.

    Cycles before ``cycle`` are solved tightly. On ``cycle`` the prolonged
    solution is smoothed one step at a time. Returns a list of
    ``(steps, residual_l2, estimator_J)`` for ``steps = 1..max_steps``.
    """
    if cycle < 2:
        raise ValueError("cycle must be >= 2")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    config = RunConfig(problem, degree=degree, cycles=cycle, mode="afem", marking=marking)
    states = iterate_cycles(config)
    prev = None
    for state in states:
        if state.cycle == cycle - 1:
            prev = state
            break
    mesh = refine(prev.space.mesh, prev.marked)
    space, constraints, system = _discretize(mesh, config)
    x = _consistent_guess(system, constraints.distribute(prolong(build_prolongation(prev.space, space), prev.u)))
    A, b = system.matrix, system.rhs
    omega, _ = richardson_weight(A)
    step = RichardsonConfig(omega, 1)
    rows = []
    for ell in range(1, max_steps + 1):
        x, _ = richardson(A, b, x, step)
        res = float(np.linalg.norm(b - A @ x))
        rows.append((ell, res, jump_estimator(space, constraints.distribute(x)).global_J))
    return rows


def richardson_propagator(A, omega, steps):
    """``y -> (I - omega A)^steps y``."""

    def apply(y):
        y = np.array(y, dtype=float)
        for _ in range(steps):
            y = y - omega * (A @ y)
        return y

    return apply


def error_propagation_probe(problem, levels=3, steps=3, degree=1):
    """Check ``e_{k+1} = M^l (a_{k+1} + I e_k)`` on the smoothed levels of an S-AFEM run.

    Here ``e_k = u_k - u_k^l`` is the algebraic error, ``a_{k+1} = u_{k+1} -
    I u_k`` the change of the exact discrete solution and ``M = I - omega A``
    the Richardson propagator. Levels ``2..levels`` are smoothed. Returns, for
    each of them, the discrepancy on the free unknowns divided by ``||f||_2``.
    """
    config = RunConfig(
        problem, degree=degree, cycles=levels + 1, mode="safem", smoother="richardson",
        smoothing_steps=steps, diagnostic=True,
    )
    out = []
    prev = None
    for state in iterate_cycles(config):
        if state.cycle > levels:
            break
        if prev is not None:
            I = build_prolongation(prev.space, state.space)
            free = state.constraints.free
            e_prev = prev.u_exact - prev.u
            a = state.u_exact - prolong(I, prev.u_exact)
            M = richardson_propagator(state.system.matrix, state.omega, steps)
            lhs = (state.u_exact - state.u)[free]
            rhs = M(a + prolong(I, e_prev))[free]
            out.append(float(np.linalg.norm(lhs - rhs) / np.linalg.norm(state.system.rhs)))
        prev = state
    return out
