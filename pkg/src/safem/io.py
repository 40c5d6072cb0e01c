"""CSV records and legacy ASCII VTK output."""
import csv
from pathlib import Path

import numpy as np

from .fespace import evaluate_in_cells

__all__ = ["CSV_HEADER", "write_csv", "read_csv", "write_vtk", "write_mesh_vtk", "read_vtk_counts"]

CSV_HEADER = (
    "cycle,n_cells,n_dofs,mode,smoother,smoothing_steps,error_h1,estimator_J,"
    "estimator_J_exact,solver_iterations,matvec_count,solve_seconds,marked_cells"
).split(",")

_INT_FIELDS = {"cycle", "n_cells", "n_dofs", "smoothing_steps", "solver_iterations", "matvec_count", "marked_cells"}
_FLOAT_FIELDS = {"error_h1", "estimator_J", "estimator_J_exact", "solve_seconds"}


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(records, path):
    """Write cycle records with the fixed header; floats round-trip exactly."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in records:
                w.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    """Parse a file written by :func:`write_csv` back into records."""
    from .driver import CycleRecord

    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            kw = {}
            for k, v in row.items():
                if k in _INT_FIELDS:
                    kw[k] = int(v)
                elif k in _FLOAT_FIELDS:
                    kw[k] = None if v == "" else float(v)
                else:
                    kw[k] = v
            out.append(CycleRecord(**kw))
    return out


def _write_grid(fh, mesh, title):
    cells = mesh.active_cells
    pts = mesh.vertices
    conn = mesh.cell_vertices[cells]
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {len(pts)} double\n")
    np.savetxt(fh, np.column_stack([pts, np.zeros(len(pts))]), fmt="%.17g")
    fh.write(f"CELLS {len(cells)} {5 * len(cells)}\n")
    np.savetxt(fh, np.column_stack([np.full(len(cells), 4), conn]), fmt="%d")
    fh.write(f"CELL_TYPES {len(cells)}\n")
    np.savetxt(fh, np.full(len(cells), 9), fmt="%d")


def _scalars(fh, name, values, fmt="%.17g"):
    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
    np.savetxt(fh, np.asarray(values, dtype=float), fmt=fmt)


def write_mesh_vtk(mesh, path):
    path = Path(path)
    try:
        with path.open("w") as fh:
            _write_grid(fh, mesh, "quadtree mesh")
            fh.write(f"CELL_DATA {mesh.active_cell_count}\n")
            _scalars(fh, "level", mesh.level[mesh.active_cells], "%d")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_vtk(space, u, eta=None, marked=None, path="solution.vtk"):
    """Solution at the mesh vertices plus per-cell indicators and marks.

    Higher-degree solutions are sampled at cell corners only.
    """
    mesh = space.mesh
    cells = mesh.active_cells
    conn = mesh.cell_vertices[cells]
    corner_xy = mesh.vertices[conn.ravel()]
    vals, _ = evaluate_in_cells(space, u, np.repeat(cells, 4), corner_xy)
    point_values = np.zeros(len(mesh.vertices))
    point_values[conn.ravel()] = vals
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            _write_grid(fh, mesh, "solution")
            fh.write(f"POINT_DATA {len(mesh.vertices)}\n")
            _scalars(fh, "solution", point_values)
            fh.write(f"CELL_DATA {len(cells)}\n")
            _scalars(fh, "level", mesh.level[cells], "%d")
            if eta is not None:
                _scalars(fh, "eta", eta.eta)
            if marked is not None:
                flag = np.isin(cells, np.asarray(marked, dtype=np.int64)).astype(float)
                _scalars(fh, "marked", flag, "%d")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_vtk_counts(path):
    """Counts declared in a legacy VTK file: points, cells and data entries."""
    counts = {}
    with Path(path).open() as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] in ("POINTS", "CELLS", "CELL_TYPES", "POINT_DATA", "CELL_DATA"):
                counts[parts[0]] = int(parts[1])
            elif parts[0] == "SCALARS":
                counts.setdefault("SCALARS", []).append(parts[1])
    return counts
