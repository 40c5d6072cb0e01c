"""
Prolongation between nested Q_deg spaces by nodal interpolation.

Each fine DoF takes the value of the coarse function at its support point,
evaluated on the coarse active cell that contains the fine cell. Coarse
vectors are expected to satisfy their constraints (hanging values filled in),
so coarse hanging DoFs may appear as interpolation sources.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import shape_functions

__all__ = ["Prolongation", "build_prolongation", "prolong", "coarse_owner"]


@dataclass
class Prolongation:
    coarse: object
    fine: object
    matrix: sp.csr_matrix

    def rows(self, dof):
        r = self.matrix.getrow(dof)
        return list(zip(r.indices.tolist(), r.data.tolist()))


def coarse_owner(coarse_mesh, fine_mesh):
    """Coarse active cell containing each fine active cell (ancestor-or-self)."""
    n0 = coarse_mesh.n_cells_total
    if fine_mesh.n_cells_total < n0 or not (
        np.array_equal(fine_mesh.level[:n0], coarse_mesh.level)
        and np.array_equal(fine_mesh.index[:n0], coarse_mesh.index)
    ):
        raise ValueError("fine mesh was not obtained by refining the coarse mesh")
    owner = fine_mesh.active_cells.copy()
    for _ in range(fine_mesh.max_level + 1):
        inside = owner < n0
        done = np.zeros(len(owner), dtype=bool)
        done[inside] = coarse_mesh.active[owner[inside]]
        if done.all():
            return owner
        owner[~done] = fine_mesh.parent[owner[~done]]
        if np.any(owner < 0):
            break
    raise ValueError("fine mesh is not nested in the coarse mesh")


def build_prolongation(coarse, fine):
    """Sparse interpolation matrix from ``coarse`` to ``fine`` coefficients."""
    if coarse.degree != fine.degree:
        raise ValueError(f"degree mismatch: {coarse.degree} vs {fine.degree}")
    owner = coarse_owner(coarse.mesh, fine.mesh)
    crow = coarse.cell_row[owner]

    fdofs = fine.cell_dofs
    uniq, first = np.unique(fdofs.ravel(), return_index=True)
    frow, floc = np.divmod(first, fdofs.shape[1])
    cell = crow[frow]
    pts = fine.support_points[uniq]
    h = coarse.mesh.cell_size(owner[frow])
    xi = (pts - coarse.mesh.cell_origin(owner[frow])) / h[:, None]
    phi, _ = shape_functions(coarse.degree, xi)
    phi[np.abs(phi) < 1e-13] = 0.0
    cols = coarse.cell_dofs[cell]
    rows = np.repeat(uniq, phi.shape[1])
    P = sp.csr_matrix((phi.ravel(), (rows, cols.ravel())), shape=(fine.dof_count, coarse.dof_count))
    P.eliminate_zeros()
    P.sort_indices()
    return Prolongation(coarse, fine, P)


def prolong(p, u_coarse):
    u_coarse = np.asarray(u_coarse, dtype=float)
    if u_coarse.shape != (p.coarse.dof_count,):
        raise ValueError(f"expected {p.coarse.dof_count} coarse coefficients, got {u_coarse.shape}")
    return p.matrix @ u_coarse
