"""Adaptive finite elements with smoothing-only intermediate solves (S-AFEM)."""
from .mesh import Mesh, create_lshape_mesh, create_unit_square_mesh, refine
from .fespace import FeSpace, ConstraintSet, build_constraints, build_space, interpolate, evaluate
from .assembly import LinearSystem, QuadratureRule, assemble_system, composite_rule, gauss_rule
from .solvers import RichardsonConfig, SolveReport, SolverBreakdown, cg, estimate_spectral_radius, gmres, richardson
from .estimate_mark import EstimatorResult, MarkingConfig, jump_estimator, mark, mark_dorfler, mark_fixed_fraction
from .transfer import Prolongation, build_prolongation, prolong
from .problems import ProblemSpec, get_problem, problem_corner2d, problem_drift2d, problem_peak2d, problem_sine2d
from .driver import (
    CycleRecord,
    MarkingError,
    RunConfig,
    error_h1,
    error_propagation_probe,
    iterate_cycles,
    run,
    seminorm_h1,
    stagnation_study,
)
from .io import read_csv, write_csv, write_vtk

__version__ = "0.1.0"
