"""
Quadtree meshes of axis-aligned square cells with hanging nodes.

A mesh is a forest of square cells. Root cells (level 0) sit on a regular
grid of spacing ``root_h`` anchored at ``origin``; a cell at level ``l`` with
integer index ``(i, j)`` covers

    [ox + i*h, ox + (i+1)*h] x [oy + j*h, oy + (j+1)*h],   h = root_h / 2**l.

Refinement splits a cell into four children and never removes cells, so cell
ids are stable across refinements and a refined mesh always nests the mesh
it was produced from. Meshes are treated as immutable; :func:`refine`
returns a new object.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Cell",
    "Edge",
    "Mesh",
    "create_unit_square_mesh",
    "create_lshape_mesh",
    "refine",
    "interior_edges",
]

# cell sides: left, right, bottom, top
LEFT, RIGHT, BOTTOM, TOP = range(4)
_SIDE_OFFSET = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])
_OPPOSITE = np.array([RIGHT, LEFT, TOP, BOTTOM])

_KEY_BITS = 28


def _cell_keys(level, ij):
    level = np.asarray(level, dtype=np.int64)
    ij = np.asarray(ij, dtype=np.int64)
    return (level << (2 * _KEY_BITS)) | (ij[..., 0] << _KEY_BITS) | ij[..., 1]


class Cell(NamedTuple):
    id: int
    vertex_ids: tuple
    level: int
    parent: int | None
    children: tuple | None
    active: bool


@dataclass(frozen=True)
class Edge:
    """A segment between active cells, or between a cell and the boundary.

    ``cells`` lists the adjacent active cells, lowest id first; ``normal``
    points from the lower-id cell into the higher-id one (outward for
    boundary edges). For a hanging configuration the edge is the fine-side
    sub-edge, so its two cells differ by one level.
    """

    id: int
    vertex_ids: tuple
    boundary: bool
    length: float
    normal: tuple
    cells: tuple


class Mesh:
    """Forest of square cells; the leaves flagged ``active`` form the mesh.

    Parameters
    ----------
    origin : (2,) array
        Lower-left corner of root cell ``(0, 0)``.
    root_h : float
        Side length of the root cells.
    level, index, parent, children, active : arrays
        Per-cell forest data for all cells ever created. ``children`` has
        shape (n, 4), ``-1`` where absent; child ``c`` of cell ``(i, j)`` has
        index ``(2i + c % 2, 2j + c // 2)``.
    """

    def __init__(self, origin, root_h, level, index, parent, children, active):
        self.origin = np.asarray(origin, dtype=float)
        self.root_h = float(root_h)
        self.level = np.asarray(level, dtype=np.int64)
        self.index = np.asarray(index, dtype=np.int64).reshape(-1, 2)
        self.parent = np.asarray(parent, dtype=np.int64)
        self.children = np.asarray(children, dtype=np.int64).reshape(-1, 4)
        self.active = np.asarray(active, dtype=bool)
        for a in (self.level, self.index, self.parent, self.children, self.active):
            a.setflags(write=False)

        keys = _cell_keys(self.level, self.index)
        self._key_order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._key_order]
        if np.any(np.diff(self._sorted_keys) == 0):
            raise ValueError("duplicate cells in forest")
        self.active_cells = np.flatnonzero(self.active)
        self._vertices = None
        self._edges = None

    # -- basic geometry -------------------------------------------------

    @property
    def n_cells_total(self):
        return len(self.level)

    @property
    def active_cell_count(self):
        return len(self.active_cells)

    @property
    def max_level(self):
        return int(self.level.max())

    def cell_size(self, cells=None):
        cells = self.active_cells if cells is None else np.asarray(cells)
        return self.root_h / 2.0 ** self.level[cells]

    def cell_origin(self, cells=None):
        """Lower-left corners of the given cells (default: active cells)."""
        cells = self.active_cells if cells is None else np.asarray(cells)
        h = self.cell_size(cells)
        return self.origin + self.index[cells] * h[..., None]

    def cell_area(self, cells=None):
        return self.cell_size(cells) ** 2

    def domain_area(self):
        roots = self.level == 0
        return roots.sum() * self.root_h**2

    def lookup(self, level, ij):
        """Forest ids of cells with the given level and index, -1 if absent."""
        level = np.asarray(level, dtype=np.int64)
        ij = np.asarray(ij, dtype=np.int64)
        ok = (level >= 0) & np.all(ij >= 0, axis=-1) & np.all(ij < 2**_KEY_BITS, axis=-1)
        keys = _cell_keys(np.where(ok, level, 0), np.where(ok[..., None], ij, 0))
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, len(self._sorted_keys) - 1)
        found = ok & (self._sorted_keys[pos] == keys)
        return np.where(found, self._key_order[pos], -1)

    def covering_cell(self, level, ij):
        """Deepest existing ancestor-or-self of positions ``(level, ij)``.

        Returns ``(ids, levels)``; ids are -1 for positions outside the domain.
        """
        level = np.asarray(level, dtype=np.int64)
        ij = np.asarray(ij, dtype=np.int64)
        ids = np.full(level.shape, -1, dtype=np.int64)
        for d in range(int(level.max(initial=0)) + 1):
            todo = (ids < 0) & (level - d >= 0)
            if not todo.any():
                break
            ids[todo] = self.lookup(level[todo] - d, ij[todo] >> d)
        lev = np.where(ids >= 0, self.level[np.maximum(ids, 0)], -1)
        return ids, lev

    def locate(self, points):
        """Active cell containing each point (-1 if outside the domain).

        A point on an interface is assigned to the cell on its upper/right side
        when that cell exists.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lmax = self.max_level
        scaled = (pts - self.origin) / self.root_h * 2**lmax
        lo = np.floor(scaled).astype(np.int64)
        alt = np.ceil(scaled).astype(np.int64) - 1
        level = np.full(len(pts), lmax)
        ids = np.full(len(pts), -1, dtype=np.int64)
        for cx, cy in ((lo, lo), (alt, lo), (lo, alt), (alt, alt)):
            miss = ids < 0
            if not miss.any():
                break
            ij = np.stack([cx[miss, 0], cy[miss, 1]], axis=1)
            ids[miss], _ = self.covering_cell(level[miss], ij)
        return ids

    # -- topology ---------------------------------------------------------

    def _build_vertices(self):
        lmax = self.max_level
        scale = 2 ** (lmax - self.level)
        corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])  # counterclockwise
        ij = (self.index[:, None, :] + corners[None]) * scale[:, None, None]
        keys = ij[..., 0] * (2**31) + ij[..., 1]
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        xy = np.stack([uniq // 2**31, uniq % 2**31], axis=1)
        pos = self.origin + xy * (self.root_h / 2**lmax)
        self._vertices = (pos, inv.reshape(-1, 4))

    @property
    def vertices(self):
        """Vertex coordinates, shape (n_vertices, 2)."""
        if self._vertices is None:
            self._build_vertices()
        return self._vertices[0]

    @property
    def cell_vertices(self):
        """Counterclockwise vertex ids of every forest cell, shape (n, 4)."""
        if self._vertices is None:
            self._build_vertices()
        return self._vertices[1]

    def cell(self, cid):
        cid = int(cid)
        if not 0 <= cid < self.n_cells_total:
            raise IndexError(f"no cell {cid}")
        ch = self.children[cid]
        return Cell(
            id=cid,
            vertex_ids=tuple(int(v) for v in self.cell_vertices[cid]),
            level=int(self.level[cid]),
            parent=None if self.parent[cid] < 0 else int(self.parent[cid]),
            children=None if ch[0] < 0 else tuple(int(c) for c in ch),
            active=bool(self.active[cid]),
        )

    def side_neighbors(self):
        """Classify the four sides of every active cell.

        Returns
        -------
        neighbor : (n_active, 4) int
            Forest id of the active cell across the side, -1 on the boundary
            or when the neighbour is refined.
        kind : (n_active, 4) int
            0 boundary, 1 same level, 2 coarser neighbour (this side is a
            hanging sub-edge), 3 finer neighbours.
        """
        cells = self.active_cells
        n = len(cells)
        lev = np.repeat(self.level[cells], 4)
        nij = (self.index[cells][:, None, :] + _SIDE_OFFSET[None]).reshape(-1, 2)
        ids, nlev = self.covering_cell(lev, nij)
        kind = np.zeros(4 * n, dtype=np.int64)
        same = (ids >= 0) & (nlev == lev)
        active = same & self.active[np.maximum(ids, 0)]
        kind[active] = 1
        kind[same & ~active] = 3
        coarse = (ids >= 0) & (nlev < lev)
        kind[coarse] = 2
        nb = np.where((kind == 1) | (kind == 2), ids, -1)
        return nb.reshape(n, 4), kind.reshape(n, 4)

    def _edge_table(self):
        """Array form of all edges: (cell_a, cell_b, side of cell_a).

        ``cell_b`` is -1 for boundary edges. Every segment appears exactly once;
        hanging sub-edges are listed from the fine cell.
        """
        if self._edges is not None:
            return self._edges
        cells = self.active_cells
        nb, kind = self.side_neighbors()
        own = np.repeat(cells, 4).reshape(-1, 4)
        side = np.tile(np.arange(4), (len(cells), 1))
        keep = (kind == 0) | (kind == 2) | ((kind == 1) & (own < nb))
        a, b, s = own[keep], nb[keep], side[keep]
        order = np.lexsort((s, a))
        self._edges = (a[order], b[order], s[order])
        return self._edges

    def edge_geometry(self, cells, sides):
        """Start point, unit tangent and length of cell sides."""
        cells = np.asarray(cells)
        sides = np.asarray(sides)
        x0 = self.cell_origin(cells)
        h = self.cell_size(cells)
        start = x0.copy()
        start[sides == RIGHT, 0] += h[sides == RIGHT]
        start[sides == TOP, 1] += h[sides == TOP]
        vertical = (sides == LEFT) | (sides == RIGHT)
        tangent = np.where(vertical[:, None], [0.0, 1.0], [1.0, 0.0])
        return start, tangent, h

    def edges(self):
        """All edges as :class:`Edge` records."""
        a, b, s = self._edge_table()
        start, tangent, h = self.edge_geometry(a, s)
        outward = _SIDE_OFFSET[s].astype(float)
        cv = self.cell_vertices
        side_vertices = {LEFT: (0, 3), RIGHT: (1, 2), BOTTOM: (0, 1), TOP: (3, 2)}
        out = []
        for k in range(len(a)):
            va, vb = side_vertices[int(s[k])]
            verts = (int(cv[a[k], va]), int(cv[a[k], vb]))
            if b[k] < 0:
                cells, normal = (int(a[k]),), outward[k]
            else:
                lo, hi = sorted((int(a[k]), int(b[k])))
                cells = (lo, hi)
                normal = outward[k] if lo == a[k] else -outward[k]
            out.append(
                Edge(
                    id=k,
                    vertex_ids=verts,
                    boundary=bool(b[k] < 0),
                    length=float(h[k]),
                    normal=(float(normal[0]), float(normal[1])),
                    cells=cells,
                )
            )
        return out

    def is_one_irregular(self):
        nb, kind = self.side_neighbors()
        lev = self.level[self.active_cells]
        coarse = kind == 2
        rows = np.nonzero(coarse)[0]
        return bool(np.all(lev[rows] - self.level[nb[coarse]] <= 1))

    def contains(self, points):
        return self.locate(points) >= 0


def create_unit_square_mesh(initial_subdivisions):
    """Uniform ``n x n`` mesh of the unit square."""
    n = int(initial_subdivisions)
    if n < 1:
        raise ValueError("initial_subdivisions must be >= 1")
    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    index = np.stack([ii.ravel(), jj.ravel()], axis=1)
    return _root_mesh((0.0, 0.0), 1.0 / n, index)


def create_lshape_mesh():
    """Three unit squares forming (-1, 1)^2 minus [0, 1]^2."""
    index = np.array([[0, 0], [1, 0], [0, 1]])
    return _root_mesh((-1.0, -1.0), 1.0, index)


def _root_mesh(origin, root_h, index):
    n = len(index)
    return Mesh(
        origin,
        root_h,
        level=np.zeros(n, dtype=np.int64),
        index=index,
        parent=np.full(n, -1),
        children=np.full((n, 4), -1),
        active=np.ones(n, dtype=bool),
    )


def _split(mesh, cells):
    cells = np.unique(np.asarray(cells, dtype=np.int64))
    if len(cells) == 0:
        return mesh
    n0, m = mesh.n_cells_total, len(cells)
    new_ids = n0 + np.arange(4 * m).reshape(m, 4)
    c = np.arange(4)
    child_index = 2 * mesh.index[cells][:, None, :] + np.stack([c % 2, c // 2], axis=1)[None]

    children = np.vstack([mesh.children, np.full((4 * m, 4), -1)])
    children[cells] = new_ids
    active = np.concatenate([mesh.active, np.ones(4 * m, dtype=bool)])
    active[cells] = False
    return Mesh(
        mesh.origin,
        mesh.root_h,
        level=np.concatenate([mesh.level, np.repeat(mesh.level[cells] + 1, 4)]),
        index=np.vstack([mesh.index, child_index.reshape(-1, 2)]),
        parent=np.concatenate([mesh.parent, np.repeat(cells, 4)]),
        children=children,
        active=active,
    )


def _irregular_cells(mesh):
    """Active cells with an edge neighbour more than one level finer."""
    cells = mesh.active_cells
    lev = mesh.level[cells]
    deep = lev >= 2
    if not deep.any():
        return np.empty(0, dtype=np.int64)
    cells, lev = cells[deep], lev[deep]
    nij = (mesh.index[cells][:, None, :] + _SIDE_OFFSET[None]).reshape(-1, 2)
    lev4 = np.repeat(lev, 4)
    ids, nlev = mesh.covering_cell(lev4, nij)
    bad = (ids >= 0) & (nlev < lev4 - 1)
    return np.unique(ids[bad])


def refine(mesh, flags):
    """Split the flagged active cells and restore one-irregularity.

    Parameters
    ----------
    mesh : Mesh
    flags : iterable of int
        Ids of active cells to split into four children.

    Returns
    -------
    Mesh
        New mesh whose active cells nest inside those of ``mesh``. Extra
        cells are split (closure) until neighbours across any edge differ by
        at most one level.
    """
    flags = np.unique(np.fromiter((int(f) for f in flags), dtype=np.int64))
    if flags.size:
        if flags.min() < 0 or flags.max() >= mesh.n_cells_total:
            raise ValueError("flagged id does not exist")
        if not mesh.active[flags].all():
            raise ValueError(f"cannot refine inactive cells {flags[~mesh.active[flags]].tolist()}")
    new = _split(mesh, flags)
    while True:
        extra = _irregular_cells(new)
        if extra.size == 0:
            return new
        new = _split(new, extra)


def interior_edges(mesh):
    """Edges shared by two active cells (fine-side sub-edges when hanging)."""
    return [e for e in mesh.edges() if not e.boundary]
