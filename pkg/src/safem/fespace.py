"""
Continuous tensor-product Lagrange spaces Q_deg on quadtree meshes.

Local shape functions use equispaced nodes ``k / deg`` per direction with
lexicographic local numbering ``a + (deg + 1) * b`` (``a`` along x). Global
DoFs are the distinct support points of the active cells; support points are
hashed on an integer lattice fine enough to hold every node exactly, so
points shared between cells always merge.

Continuity across hanging edges and Dirichlet data are imposed through a
:class:`ConstraintSet`.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import BOTTOM, LEFT, RIGHT, TOP, _OPPOSITE

__all__ = [
    "lagrange_1d",
    "shape_functions",
    "FeSpace",
    "ConstraintSet",
    "build_space",
    "build_constraints",
    "evaluate",
    "evaluate_in_cells",
    "interpolate",
]


def lagrange_1d(degree, t):
    """Equispaced Lagrange basis on [0, 1] and its derivative.

    Returns two arrays of shape ``t.shape + (degree + 1,)``.
    """
    t = np.asarray(t, dtype=float)
    nodes = np.arange(degree + 1) / degree
    vals = np.ones(t.shape + (degree + 1,))
    ders = np.zeros(t.shape + (degree + 1,))
    for k in range(degree + 1):
        others = [m for m in range(degree + 1) if m != k]
        denom = np.prod([nodes[k] - nodes[m] for m in others])
        factors = [t - nodes[m] for m in others]
        vals[..., k] = np.prod(factors, axis=0) / denom if others else 1.0
        d = np.zeros(t.shape)
        for skip in range(len(others)):
            term = np.ones(t.shape)
            for q, f in enumerate(factors):
                if q != skip:
                    term = term * f
            d = d + term
        ders[..., k] = d / denom
    return vals, ders


def shape_functions(degree, xi):
    """Values and reference gradients of the Q_deg basis at points ``xi``.

    Parameters
    ----------
    xi : (..., 2) array of reference coordinates in [0, 1]^2.

    Returns
    -------
    phi : (..., n_loc)
    dphi : (..., n_loc, 2)
    """
    xi = np.asarray(xi, dtype=float)
    lx, dlx = lagrange_1d(degree, xi[..., 0])
    ly, dly = lagrange_1d(degree, xi[..., 1])
    # local index a + (deg+1) b  <->  L_a(x) L_b(y)
    phi = (ly[..., :, None] * lx[..., None, :]).reshape(xi.shape[:-1] + (-1,))
    gx = (ly[..., :, None] * dlx[..., None, :]).reshape(phi.shape)
    gy = (dly[..., :, None] * lx[..., None, :]).reshape(phi.shape)
    return phi, np.stack([gx, gy], axis=-1)


def side_dofs(degree):
    """Local indices of the nodes on each cell side, ordered by increasing coordinate."""
    n = degree + 1
    r = np.arange(n)
    out = np.empty((4, n), dtype=np.int64)
    out[LEFT] = r * n
    out[RIGHT] = r * n + degree
    out[BOTTOM] = r
    out[TOP] = degree * n + r
    return out


class FeSpace:
    """Q_deg Lagrange space on the active cells of a mesh.

    Attributes
    ----------
    mesh : Mesh
    degree : int
    cells : (n_active,) forest ids of the active cells, ascending
    cell_dofs : (n_active, (deg+1)**2) global DoF indices per cell
    support_points : (N, 2) nodal coordinates
    """

    def __init__(self, mesh, degree, cell_dofs, support_points):
        self.mesh = mesh
        self.degree = degree
        self.cells = mesh.active_cells
        self.cell_dofs = cell_dofs
        self.support_points = support_points
        self.cell_row = np.full(mesh.n_cells_total, -1, dtype=np.int64)
        self.cell_row[self.cells] = np.arange(len(self.cells))

    @property
    def dof_count(self):
        return len(self.support_points)

    @property
    def dofs_per_cell(self):
        return (self.degree + 1) ** 2

    def __repr__(self):
        return f"FeSpace(Q{self.degree}, cells={len(self.cells)}, dofs={self.dof_count})"


def build_space(mesh, degree):
    """Enumerate the DoFs of the Q_deg space on ``mesh``."""
    degree = int(degree)
    if degree not in (1, 2, 3):
        raise ValueError(f"degree must be 1, 2 or 3, got {degree}")
    cells = mesh.active_cells
    lmax = mesh.max_level
    span = degree * 2 ** (lmax - mesh.level[cells])  # cell side in lattice units
    base = degree * mesh.index[cells] * 2 ** (lmax - mesh.level[cells])[:, None]
    a = np.arange(degree + 1)
    ax, by = np.meshgrid(a, a, indexing="xy")  # lexicographic, x fastest
    loc = np.stack([ax.ravel(), by.ravel()], axis=1)
    lat = base[:, None, :] + loc[None] * (span // degree)[:, None, None]
    keys = lat[..., 0] * (2**31) + lat[..., 1]
    uniq, inv = np.unique(keys.ravel(), return_inverse=True)
    xy = np.stack([uniq // 2**31, uniq % 2**31], axis=1)
    points = mesh.origin + xy * (mesh.root_h / (degree * 2**lmax))
    return FeSpace(mesh, degree, inv.reshape(len(cells), -1), points)


@dataclass
class ConstraintSet:
    """Flat affine constraints ``u[c] = sum_m w_cm u[m] + g[c]``.

    ``matrix`` is N x N: identity on unconstrained DoFs, the resolved master
    weights on hanging rows, zero on Dirichlet rows. Masters are never
    constrained, so :meth:`distribute` is idempotent.
    """

    matrix: sp.csr_matrix
    inhomogeneity: np.ndarray
    constrained: np.ndarray
    dirichlet: np.ndarray
    dof_count: int

    @property
    def free(self):
        return ~self.constrained

    def entries(self, dof):
        """``(masters, inhomogeneity)`` for one DoF; empty masters for Dirichlet."""
        if not self.constrained[dof]:
            return None
        row = self.matrix.getrow(dof)
        masters = list(zip(row.indices.tolist(), row.data.tolist()))
        return sorted(masters), float(self.inhomogeneity[dof])

    def distribute(self, u):
        """Overwrite constrained entries of ``u`` from its masters."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dof_count,):
            raise ValueError(f"vector length {u.shape} does not match {self.dof_count} DoFs")
        return self.matrix @ u + self.inhomogeneity

    def is_satisfied(self, u, tol=1e-12):
        return np.max(np.abs(self.distribute(u) - u), initial=0.0) <= tol * max(1.0, np.abs(u).max(initial=0.0))


def _hanging_rows(space):
    """Raw (slave, master, weight) triplets from every hanging sub-edge."""
    mesh, deg = space.mesh, space.degree
    nb, kind = mesh.side_neighbors()
    rows, sides = np.nonzero(kind == 2)
    if rows.size == 0:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    sd = side_dofs(deg)
    fine = space.cells[rows]
    coarse = nb[rows, sides]
    crow = space.cell_row[coarse]
    fine_origin = mesh.cell_origin(fine)
    coarse_origin = mesh.cell_origin(coarse)
    hf = mesh.cell_size(fine)
    hc = mesh.cell_size(coarse)
    nodes = np.arange(deg + 1) / deg
    vertical = (sides == LEFT) | (sides == RIGHT)
    axis = np.where(vertical, 1, 0)  # coordinate running along the side
    start_f = fine_origin[np.arange(len(rows)), axis]
    start_c = coarse_origin[np.arange(len(rows)), axis]
    t = (start_f[:, None] + nodes[None] * hf[:, None] - start_c[:, None]) / hc[:, None]

    slave = space.cell_dofs[rows[:, None], sd[sides]]
    master = space.cell_dofs[crow[:, None], sd[_OPPOSITE[sides]]]
    weights, _ = lagrange_1d(deg, t)  # (n, deg+1 slaves, deg+1 masters)
    # slaves coinciding with a coarse node are the coarse DoF itself
    on_node = np.isclose(t[..., None], nodes[None, None, :], atol=1e-12).any(axis=-1)
    keep = ~on_node
    s_idx = np.repeat(slave[keep], deg + 1)
    m_idx = np.broadcast_to(master[:, None, :], weights.shape)[keep].ravel()
    return s_idx, m_idx, weights[keep].ravel()


def boundary_dofs(space):
    """Indices of DoFs lying on the domain boundary."""
    nb, kind = space.mesh.side_neighbors()
    rows, sides = np.nonzero(kind == 0)
    sd = side_dofs(space.degree)
    return np.unique(space.cell_dofs[rows[:, None], sd[sides]])


def build_constraints(space, dirichlet_data):
    """Hanging-node and Dirichlet constraints for ``space``.

    Parameters
    ----------
    dirichlet_data : callable
        ``g(x, y)`` evaluated (vectorized) at boundary support points, or
        ``None`` for hanging constraints only.
    """
    n = space.dof_count
    bdofs = boundary_dofs(space) if dirichlet_data is not None else np.empty(0, dtype=np.int64)
    s, m, w = _hanging_rows(space)
    # first occurrence wins for slaves seen from two fine cells
    if s.size:
        deg1 = space.degree + 1
        first = np.unique(s.reshape(-1, deg1)[:, 0], return_index=True)[1]
        keep = np.zeros(len(s) // deg1, dtype=bool)
        keep[first] = True
        keep = np.repeat(keep, deg1)
        s, m, w = s[keep], m[keep], w[keep]
        nz = np.abs(w) > 1e-14
        s, m, w = s[nz], m[nz], w[nz]
    hanging = np.zeros(n, dtype=bool)
    hanging[s] = True
    dirichlet = np.zeros(n, dtype=bool)
    dirichlet[bdofs] = True
    if np.any(hanging & dirichlet):
        raise RuntimeError("boundary DoF found on a hanging edge")

    g = np.zeros(n)
    if bdofs.size:
        x, y = space.support_points[bdofs].T
        g[bdofs] = np.broadcast_to(np.asarray(dirichlet_data(x, y), dtype=float), x.shape)

    constrained = hanging | dirichlet
    free = np.flatnonzero(~constrained)
    T = sp.csr_matrix(
        (np.concatenate([np.ones(len(free)), w]), (np.concatenate([free, s]), np.concatenate([free, m]))),
        shape=(n, n),
    )
    # substitute constrained masters until every master is free
    mask = sp.diags(constrained.astype(float))
    for _ in range(64):
        if (T @ mask).nnz == 0:
            break
        g = T @ g + g
        T = T @ T
        T.data[np.abs(T.data) < 1e-15] = 0.0
        T.eliminate_zeros()
    else:
        raise RuntimeError("constraint chains did not resolve")
    T.sort_indices()
    return ConstraintSet(T.tocsr(), g, constrained, dirichlet, n)


def evaluate_in_cells(space, u, cells, points):
    """Value and gradient of ``sum u_j phi_j`` at points inside given active cells."""
    mesh = space.mesh
    cells = np.asarray(cells, dtype=np.int64)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    h = mesh.cell_size(cells)
    xi = (points - mesh.cell_origin(cells)) / h[:, None]
    phi, dphi = shape_functions(space.degree, xi)
    coef = np.asarray(u)[space.cell_dofs[space.cell_row[cells]]]
    value = np.einsum("nk,nk->n", phi, coef)
    grad = np.einsum("nkd,nk->nd", dphi, coef) / h[:, None]
    return value, grad


def evaluate(space, u, point):
    """Value and gradient of the discrete function at one or many points."""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    cells = space.mesh.locate(pts)
    if np.any(cells < 0):
        bad = pts[cells < 0][0]
        raise ValueError(f"point {tuple(bad)} lies outside the mesh")
    value, grad = evaluate_in_cells(space, u, cells, pts)
    if single:
        return float(value[0]), grad[0]
    return value, grad


def interpolate(space, func):
    """Nodal interpolant coefficients of a vectorized ``func(x, y)``."""
    x, y = space.support_points.T
    return np.broadcast_to(np.asarray(func(x, y), dtype=float), x.shape).copy()
