"""
Gradient-jump error indicators and marking strategies.

For an interior edge E with unit normal n_E the indicator is

    J_E(v) = h_E^(1/2) || [dv/dn_E] ||_{L2(E)},

cells collect ``eta_T^2 = sum_{E in dT} J_E^2`` and the global estimator is
``J = (sum_E J_E^2)^(1/2)``, so ``J^2 = 1/2 sum_T eta_T^2``. Boundary edges
contribute nothing. Hanging edges are integrated on the fine sub-edges.
"""
from dataclasses import dataclass
import math

import numpy as np

from .assembly import gauss_1d
from .fespace import evaluate_in_cells
from .mesh import _SIDE_OFFSET

__all__ = [
    "EstimatorResult",
    "MarkingConfig",
    "jump_estimator",
    "mark_dorfler",
    "mark_fixed_fraction",
    "mark",
]


@dataclass
class EstimatorResult:
    """Per-cell indicators (aligned with ``cells``) and the global estimator."""

    cells: np.ndarray
    eta: np.ndarray
    global_J: float

    @property
    def per_cell(self):
        return dict(zip(self.cells.tolist(), self.eta.tolist()))

    @classmethod
    def from_values(cls, eta, cells=None):
        eta = np.asarray(eta, dtype=float)
        cells = np.arange(len(eta)) if cells is None else np.asarray(cells)
        return cls(cells, eta, math.sqrt(0.5 * float(np.sum(eta**2))))


@dataclass(frozen=True)
class MarkingConfig:
    strategy: str = "dorfler"
    theta: float = 0.3
    fraction: float = 1.0 / 3.0

    def __post_init__(self):
        if self.strategy == "dorfler":
            if not 0.0 <= self.theta <= 1.0:
                raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        elif self.strategy == "fixed_fraction":
            if not 0.0 < self.fraction <= 1.0:
                raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")
        else:
            raise ValueError(f"unknown marking strategy {self.strategy!r}")


def jump_estimator(space, u, edge_quad=None, constraints=None):
    """Gradient-jump indicators of the discrete function ``u``.

    Parameters
    ----------
    space : FeSpace
    u : coefficient vector satisfying the space's constraints
    edge_quad : ``(points, weights)`` on [0, 1]; default ``deg + 1`` Gauss points
    constraints : ConstraintSet, optional
        When given, ``u`` is checked against it first.
    """
    u = np.asarray(u, dtype=float)
    if constraints is not None and not constraints.is_satisfied(u, tol=1e-10):
        raise ValueError("coefficient vector does not satisfy the constraints")
    mesh = space.mesh
    t, w = gauss_1d(space.degree + 1) if edge_quad is None else edge_quad
    a, b, side = mesh._edge_table()
    inner = b >= 0
    a, b, side = a[inner], b[inner], side[inner]

    start, tangent, length = mesh.edge_geometry(a, side)
    nq = len(t)
    pts = start[:, None, :] + (t[None, :, None] * length[:, None, None]) * tangent[:, None, :]
    pts = pts.reshape(-1, 2)
    _, ga = evaluate_in_cells(space, u, np.repeat(a, nq), pts)
    _, gb = evaluate_in_cells(space, u, np.repeat(b, nq), pts)
    normal = _SIDE_OFFSET[side].astype(float)
    jump = np.einsum("nqd,nd->nq", (ga - gb).reshape(-1, nq, 2), normal)
    JE2 = length**2 * (jump**2 @ w)  # h_E * int_E jump^2

    rows = space.cell_row
    eta2 = np.bincount(rows[a], weights=JE2, minlength=len(space.cells))
    eta2 += np.bincount(rows[b], weights=JE2, minlength=len(space.cells))
    return EstimatorResult(space.cells.copy(), np.sqrt(eta2), math.sqrt(float(JE2.sum())))


def mark_dorfler(eta, theta):
    """Cells with ``eta_T >= L`` for the largest ``L`` meeting the bulk criterion.

    ``theta * sum eta^2 <= sum_{marked} eta^2``. Ties at the threshold are
    all marked.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    values = np.asarray(eta.eta, dtype=float)
    if theta == 0.0 or values.size == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-values, kind="stable")
    cums = np.cumsum(values[order] ** 2)
    total = cums[-1]
    if total == 0.0:
        return np.empty(0, dtype=np.int64)
    k = int(np.searchsorted(cums, theta * total, side="left"))
    threshold = values[order[min(k, len(values) - 1)]]
    return np.sort(eta.cells[values >= threshold])


def mark_fixed_fraction(eta, fraction):
    """The ``ceil(fraction * n)`` cells with the largest indicators.

    Ties at the cutoff go to the smaller cell id.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    values = np.asarray(eta.eta, dtype=float)
    n = len(values)
    k = min(n, math.ceil(fraction * n - 1e-9))
    order = np.lexsort((eta.cells, -values))
    return np.sort(eta.cells[order[:k]])


def mark(eta, config):
    if config.strategy == "dorfler":
        return mark_dorfler(eta, config.theta)
    return mark_fixed_fraction(eta, config.fraction)
