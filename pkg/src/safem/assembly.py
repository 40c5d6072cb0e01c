"""
Quadrature, element matrices and constrained global assembly for

    -Laplace(u) + beta . grad(u) = f   with   u = g on the boundary.

Cells are squares, so the reference stiffness matrix is the same on every
cell (it is scale invariant in 2D), the drift block scales with ``h`` and the
load with ``h**2``. Assembly therefore tabulates the reference integrals
once and scales them per cell.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import shape_functions

__all__ = [
    "QuadratureRule",
    "gauss_1d",
    "gauss_rule",
    "composite_rule",
    "LinearSystem",
    "local_cell_matrix",
    "reference_matrices",
    "assemble_system",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Points in [0, 1]^2 and positive weights summing to 1."""

    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


def gauss_1d(n):
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_rule(points_per_direction):
    """Tensor-product Gauss-Legendre rule on the unit square."""
    n = int(points_per_direction)
    if not 1 <= n <= 6:
        raise ValueError(f"points_per_direction must be in 1..6, got {n}")
    x, w = gauss_1d(n)
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)
    return QuadratureRule(np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel())


def composite_rule(points_per_direction, subdivisions):
    """Gauss rule repeated on an ``s x s`` grid of sub-squares."""
    base = gauss_rule(points_per_direction)
    s = int(subdivisions)
    off = np.stack(np.meshgrid(np.arange(s), np.arange(s), indexing="xy"), axis=-1).reshape(-1, 2)
    pts = (off[:, None, :] + base.points[None]) / s
    w = np.tile(base.weights, len(off)) / s**2
    return QuadratureRule(pts.reshape(-1, 2), w)


@dataclass
class LinearSystem:
    """Condensed system over all N DoFs.

    Constrained rows and columns are replaced by identity rows; the matching
    right-hand-side entries carry the constraint inhomogeneities.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constraints: object

    @property
    def size(self):
        return self.matrix.shape[0]


def reference_matrices(degree, quad):
    """Unit-cell stiffness and drift blocks.

    Returns ``S, Dx, Dy`` with ``S_ij = int grad phi_j . grad phi_i`` and
    ``Dx_ij = int (d phi_j / dx) phi_i`` (likewise ``Dy``).
    """
    phi, dphi = shape_functions(degree, quad.points)
    w = quad.weights
    S = np.einsum("q,qid,qjd->ij", w, dphi, dphi)
    Dx = np.einsum("q,qi,qj->ij", w, phi, dphi[..., 0])
    Dy = np.einsum("q,qi,qj->ij", w, phi, dphi[..., 1])
    return S, Dx, Dy


def _cell_blocks(origins, h, degree, beta, quad, source):
    S, Dx, Dy = reference_matrices(degree, quad)
    drift = beta[0] * Dx + beta[1] * Dy
    K = S[None] + h[:, None, None] * drift[None]
    F = np.zeros((len(h), S.shape[0]))
    if source is not None:
        phi, _ = shape_functions(degree, quad.points)
        x = origins[:, None, :] + h[:, None, None] * quad.points[None]
        fq = np.broadcast_to(np.asarray(source(x[..., 0], x[..., 1]), dtype=float), x.shape[:2])
        F = (h**2)[:, None] * np.einsum("q,nq,qi->ni", quad.weights, fq, phi)
    return K, F


def local_cell_matrix(mesh, cell, degree, beta=(0.0, 0.0), quad=None, source=None):
    """Element matrix and load vector of one cell.

    ``K_ij = int_T grad phi_j . grad phi_i + (beta . grad phi_j) phi_i`` and
    ``F_i = int_T f phi_i``, both by quadrature.
    """
    quad = gauss_rule(degree + 1) if quad is None else quad
    h = mesh.cell_size([cell])
    if not np.all(h > 0):
        raise ValueError(f"cell {cell} has zero area")
    K, F = _cell_blocks(mesh.cell_origin([cell]), h, degree, np.asarray(beta, float), quad, source)
    return K[0], F[0]


def assemble_system(space, constraints, beta=(0.0, 0.0), source=None, quad=None, source_quad=None):
    """Assemble ``A u = f`` with constraints condensed out.

    Parameters
    ----------
    space : FeSpace
    constraints : ConstraintSet
        Built on ``space``.
    beta : velocity pair
    source : callable ``f(x, y)``, optional
    quad : QuadratureRule for the bilinear form (default (deg+1)^2 Gauss).
    source_quad : QuadratureRule for the load (default ``quad``).

    Returns
    -------
    LinearSystem
    """
    if constraints.dof_count != space.dof_count:
        raise ValueError("constraints were built for a different space")
    deg = space.degree
    quad = gauss_rule(deg + 1) if quad is None else quad
    source_quad = quad if source_quad is None else source_quad
    beta = np.asarray(beta, dtype=float)
    mesh = space.mesh
    h = mesh.cell_size(space.cells)
    origins = mesh.cell_origin(space.cells)

    K, _ = _cell_blocks(origins, h, deg, beta, quad, None)
    _, F = _cell_blocks(origins, h, deg, beta, source_quad, source)

    n = space.dof_count
    dofs = space.cell_dofs
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    Kg = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    Fg = np.bincount(dofs.ravel(), weights=F.ravel(), minlength=n)

    P = constraints.matrix
    g = constraints.inhomogeneity
    c = constraints.constrained
    A = (P.T @ Kg @ P).tocsr() + sp.diags(c.astype(float))
    A = A.tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    b = P.T @ (Fg - Kg @ g)
    b[c] = g[c]
    return LinearSystem(A, b, constraints)
