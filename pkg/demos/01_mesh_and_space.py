"""
Quadtree meshes, hanging nodes and the Q_deg space.

Refining one corner of the L-shaped domain twice creates hanging nodes.
Their DoFs are tied to the coarse neighbour's trace, and a discrete
function built from random free values stays continuous across them.
"""
import numpy as np

from safem import build_constraints, build_space, create_lshape_mesh, refine
from safem.fespace import evaluate_in_cells
from safem.io import write_mesh_vtk

mesh = create_lshape_mesh()
mesh = refine(mesh, [mesh.active_cells[1]])
mesh = refine(mesh, [mesh.active_cells[-1]])
print(f"{mesh.active_cell_count} active cells, max level {mesh.max_level}, one-irregular: {mesh.is_one_irregular()}")

for degree in (1, 2, 3):
    space = build_space(mesh, degree)
    c = build_constraints(space, lambda x, y: 0 * x)
    n_hanging = int(np.count_nonzero(c.constrained & ~c.dirichlet))
    print(f"Q{degree}: {space.dof_count} DoFs, {n_hanging} hanging, {int(c.dirichlet.sum())} on the boundary")

    # the largest jump of a random constrained function across any interior edge
    u = c.distribute(np.random.default_rng(0).standard_normal(space.dof_count))
    a, b, side = mesh._edge_table()
    inner = b >= 0
    start, tangent, length = mesh.edge_geometry(a[inner], side[inner])
    pts = start + 0.3 * length[:, None] * tangent
    jump = evaluate_in_cells(space, u, a[inner], pts)[0] - evaluate_in_cells(space, u, b[inner], pts)[0]
    print(f"     max jump across edges: {np.abs(jump).max():.1e}")

print("wrote", write_mesh_vtk(mesh, "lshape_mesh.vtk"))
