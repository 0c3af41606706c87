"""Triangular meshes: topology queries, quality measures and red-green refinement.

A :class:`Mesh` holds vertex coordinates and counterclockwise vertex triples.
Everything else (edges, boundary, areas, diameters) is derived on demand and
cached.  Meshes are never mutated; refinement returns a new mesh.

Refinement follows the red-green-blue scheme.  Marked cells are split into
four similar children through their edge midpoints (red).  A neighbour whose
longest edge is the only split edge is bisected towards the opposite vertex
(green).  A neighbour touched on a shorter edge has its longest edge split as
well and is cut into three (blue); a neighbour with all three edges split is
promoted to red.  Transition (green or blue) cells are never subdivided
again: when one has to be touched, its family is replaced by the red
refinement of the parent.  Every cell therefore stays within one bisection
of its longest edge from a triangle similar to a root cell.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument

ROOT, RED, GREEN, BLUE = 0, 1, 2, 3
KIND_NAMES = {ROOT: "root", RED: "red", GREEN: "green", BLUE: "blue"}

_SHIFT = np.int64(32)
_LOW = np.int64((1 << 32) - 1)


def _edge_keys(cells):
    """Integer keys of the three edges (v0v1, v1v2, v2v0) of every cell."""
    a = cells.astype(np.int64)
    b = np.roll(a, -1, axis=1)
    return (np.minimum(a, b) << _SHIFT) | np.maximum(a, b)


def _edge_lengths(vertices, cells):
    """(nc, 3) lengths of edges v0v1, v1v2, v2v0."""
    p = vertices[cells]
    return np.linalg.norm(np.roll(p, -1, axis=1) - p, axis=2)


def _key_vertices(keys):
    keys = np.asarray(keys, dtype=np.int64)
    return keys >> _SHIFT, keys & _LOW


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of a planar domain.

    Parameters
    ----------
    vertices : (nv, 2) array
        Vertex coordinates.
    cells : (nc, 3) int array
        Vertex indices of each triangle, counterclockwise.
    kind : (nc,) int array, optional
        Genealogy: ``ROOT``, ``RED``, ``GREEN`` or ``BLUE`` per cell.
    parent_vertices : (nc, 3) int array, optional
        Vertex triple of the parent triangle (-1 for roots).  For green and
        blue cells the parent's longest edge is ``parent_vertices[:, :2]``.
    parent : (nc,) int array, optional
        Index of the cell of the previous mesh this cell descends from,
        -1 for roots and for children of restored green parents.
    vertex_parents : (nv, 2) int array, optional
        Edge endpoints for vertices created as midpoints, -1 otherwise.
    """

    vertices: np.ndarray
    cells: np.ndarray
    kind: np.ndarray = None
    parent_vertices: np.ndarray = None
    parent: np.ndarray = None
    vertex_parents: np.ndarray = None

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise InvalidArgument("vertices must have shape (nv, 2)")
        if cells.ndim != 2 or cells.shape[1] != 3 or len(cells) == 0:
            raise InvalidArgument("cells must have shape (nc, 3) with nc >= 1")
        nv, nc = len(vertices), len(cells)
        if cells.min() < 0 or cells.max() >= nv:
            raise InvalidArgument("cell vertex index out of range")
        if np.any((cells[:, 0] == cells[:, 1]) | (cells[:, 1] == cells[:, 2])
                  | (cells[:, 0] == cells[:, 2])):
            raise InvalidArgument("cell with repeated vertex")
        kind = np.zeros(nc, dtype=np.int8) if self.kind is None else np.asarray(self.kind, dtype=np.int8)
        pverts = (np.full((nc, 3), -1, dtype=np.int64) if self.parent_vertices is None
                  else np.asarray(self.parent_vertices, dtype=np.int64))
        parent = (np.full(nc, -1, dtype=np.int64) if self.parent is None
                  else np.asarray(self.parent, dtype=np.int64))
        vparents = (np.full((nv, 2), -1, dtype=np.int64) if self.vertex_parents is None
                    else np.asarray(self.vertex_parents, dtype=np.int64))
        if kind.shape != (nc,) or pverts.shape != (nc, 3) or parent.shape != (nc,):
            raise InvalidArgument("genealogy arrays must match the cell count")
        if vparents.shape != (nv, 2):
            raise InvalidArgument("vertex_parents must have shape (nv, 2)")
        for name, arr in [("vertices", vertices), ("cells", cells), ("kind", kind),
                          ("parent_vertices", pverts), ("parent", parent),
                          ("vertex_parents", vparents)]:
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        bad = np.flatnonzero(self.signed_areas <= 0.0)
        if bad.size:
            raise InvalidArgument(
                f"cell {bad[0]} has non-positive signed area {self.signed_areas[bad[0]]:.3e}"
            )

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self):
        return self.signed_areas

    @cached_property
    def edge_lengths(self):
        """(nc, 3) lengths of edges v0v1, v1v2, v2v0."""
        return _edge_lengths(self.vertices, self.cells)

    @cached_property
    def diameters(self):
        return self.edge_lengths.max(axis=1)

    @cached_property
    def centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def _edge_census(self):
        keys = _edge_keys(self.cells)
        uniq, inverse, counts = np.unique(keys.ravel(), return_inverse=True, return_counts=True)
        return uniq, inverse.reshape(keys.shape), counts

    @property
    def edges(self):
        """(ne, 2) array of unique edges, smaller vertex index first."""
        uniq = self._edge_census[0]
        return np.stack(_key_vertices(uniq), axis=1)

    @property
    def cell_edges(self):
        """(nc, 3) indices into :attr:`edges` for edges v0v1, v1v2, v2v0."""
        return self._edge_census[1]

    @property
    def edge_cell_counts(self):
        return self._edge_census[2]

    @cached_property
    def boundary_edges(self):
        return self.edges[self.edge_cell_counts == 1]

    @cached_property
    def boundary_vertex_ids(self):
        ids = np.unique(self.boundary_edges)
        ids.flags.writeable = False
        return ids

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.num_vertices, dtype=bool)
        mask[self.boundary_vertex_ids] = True
        return mask

    def total_area(self):
        return float(self.areas.sum())


@dataclass(frozen=True, eq=False)
class Adjacency:
    """Vertex-cell incidence of a mesh.

    ``incidence`` is the sparse (nc, nv) 0/1 matrix; its CSR transpose gives
    vertex-to-cell lists without Python-level containers.
    """

    cell_to_vertices: np.ndarray
    incidence: sp.csr_matrix
    vertex_incidence: sp.csr_matrix
    edge_to_cells: dict

    @property
    def num_cells(self):
        return self.incidence.shape[0]

    @property
    def num_vertices(self):
        return self.incidence.shape[1]

    def vertex_to_cells(self, vertex_id):
        vi = self.vertex_incidence
        return vi.indices[vi.indptr[vertex_id]:vi.indptr[vertex_id + 1]]


@dataclass(frozen=True)
class MeshQuality:
    min_angle: float
    max_cell_diameter: float
    min_cell_area: float


def build_structured_square(n, lo=0.0, hi=1.0):
    """Uniform n-by-n square grid split into 2n^2 triangles along one diagonal.

    ``lo`` and ``hi`` are either scalars or (x, y) pairs giving the lower-left
    and upper-right corners.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n!r}")
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (2,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (2,))
    if np.any(lo >= hi):
        raise InvalidArgument("need lo < hi componentwise")
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, cells)


def build_adjacency(mesh):
    nc, nv = mesh.num_cells, mesh.num_vertices
    rows = np.repeat(np.arange(nc), 3)
    incidence = sp.csr_matrix(
        (np.ones(3 * nc, dtype=np.int8), (rows, mesh.cells.ravel())), shape=(nc, nv)
    )
    incidence.sort_indices()
    vertex_incidence = incidence.T.tocsr()
    vertex_incidence.sort_indices()
    edge_to_cells = {}
    for c, triple in enumerate(mesh.cells.tolist()):
        for k in range(3):
            a, b = triple[k], triple[(k + 1) % 3]
            edge_to_cells.setdefault((min(a, b), max(a, b)), []).append(c)
    edge_to_cells = {e: tuple(cs) for e, cs in edge_to_cells.items()}
    return Adjacency(mesh.cells, incidence, vertex_incidence, edge_to_cells)


def star(adj, vertex_id):
    """Cells incident to ``vertex_id``."""
    if not 0 <= vertex_id < adj.num_vertices:
        raise InvalidArgument(f"vertex id {vertex_id} out of range")
    return frozenset(adj.vertex_to_cells(vertex_id).tolist())


def closure_vertices(adj, cell_id):
    """The three vertices of ``cell_id``."""
    if not 0 <= cell_id < adj.num_cells:
        raise InvalidArgument(f"cell id {cell_id} out of range")
    return tuple(int(v) for v in adj.cell_to_vertices[cell_id])


def cell_diameter(mesh, cell_id):
    """Longest edge length of a cell."""
    if not 0 <= cell_id < mesh.num_cells:
        raise InvalidArgument(f"cell id {cell_id} out of range")
    return float(mesh.diameters[cell_id])


def vertex_avg_incident_diameter(mesh, adj=None):
    """Per-vertex arithmetic mean of the diameters of incident cells."""
    if adj is None:
        adj = build_adjacency(mesh)
    vi = adj.vertex_incidence
    sums = vi @ mesh.diameters
    counts = np.diff(vi.indptr)
    out = np.zeros(mesh.num_vertices)
    used = counts > 0
    out[used] = sums[used] / counts[used]
    return out


def cell_angles(mesh):
    """(nc, 3) interior angles in degrees, angle k at vertex k."""
    L = mesh.edge_lengths
    # opposite edge of vertex 0 is v1v2 (column 1), etc.
    a, b, c = L[:, 1], L[:, 2], L[:, 0]
    def ang(opp, s1, s2):
        cosv = (s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)
        return np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))
    return np.column_stack([ang(a, b, c), ang(b, c, a), ang(c, a, b)])


def quality(mesh):
    return MeshQuality(
        min_angle=float(cell_angles(mesh).min()),
        max_cell_diameter=float(mesh.diameters.max()),
        min_cell_area=float(mesh.areas.min()),
    )


def conformity_defects(mesh, rtol=1e-10):
    """Return edges violating conformity.

    An edge shared by more than two cells is a defect, as is any boundary
    (single-cell) edge that has another mesh vertex in its interior, which is
    exactly a hanging node.  An empty array means the mesh is conforming.
    """
    bad = [mesh.edges[mesh.edge_cell_counts > 2]]
    bedges = mesh.boundary_edges
    if len(bedges):
        from scipy.spatial import cKDTree

        tree = cKDTree(mesh.vertices)
        p, q = mesh.vertices[bedges[:, 0]], mesh.vertices[bedges[:, 1]]
        mid = 0.5 * (p + q)
        half = 0.5 * np.linalg.norm(q - p, axis=1)
        hanging = []
        for e, cands in enumerate(tree.query_ball_point(mid, half * (1.0 + rtol))):
            a, b = bedges[e]
            seg = q[e] - p[e]
            L2 = seg @ seg
            for v in cands:
                if v == a or v == b:
                    continue
                d = mesh.vertices[v] - p[e]
                t = (d @ seg) / L2
                if 0.0 < t < 1.0 and abs(d[0] * seg[1] - d[1] * seg[0]) <= rtol * L2:
                    hanging.append((a, b))
                    break
        if hanging:
            bad.append(np.array(hanging, dtype=np.int64))
    return np.concatenate(bad) if len(bad) > 1 else bad[0]


class _Refiner:
    """Working state for one call of :func:`refine_marked`."""

    def __init__(self, mesh, mask):
        self.vertices = [mesh.vertices]
        self.nv = mesh.num_vertices
        self.vparents = [mesh.vertex_parents]
        self.cells = mesh.cells.copy()
        self.kind = mesh.kind.copy()
        self.pverts = mesh.parent_vertices.copy()
        self.origin = np.arange(mesh.num_cells, dtype=np.int64)
        self.red = mask.copy()
        self.mid = {}
        self.forced = set()
        self._coords = mesh.vertices

    def _new_vertices(self, keys):
        """Create midpoints for the given edge keys (skipping known ones)."""
        keys = [int(k) for k in keys if int(k) not in self.mid]
        if not keys:
            return
        keys = np.array(sorted(set(keys)), dtype=np.int64)
        a, b = _key_vertices(keys)
        coords = self._all_coords()
        pts = 0.5 * (coords[a] + coords[b])
        ids = np.arange(self.nv, self.nv + len(keys))
        self.vertices.append(pts)
        self.vparents.append(np.column_stack([a, b]))
        self._coords = None
        self.nv += len(keys)
        self.mid.update(zip(keys.tolist(), ids.tolist()))

    def _all_coords(self):
        if self._coords is None:
            self._coords = np.concatenate(self.vertices)
            self.vertices = [self._coords]
        return self._coords

    def _mids(self, a, b):
        keys = (np.minimum(a, b).astype(np.int64) << _SHIFT) | np.maximum(a, b)
        return np.fromiter((self.mid[int(k)] for k in keys), dtype=np.int64, count=len(keys))

    def _red_children(self, tri):
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        mab, mbc, mca = self._mids(a, b), self._mids(b, c), self._mids(c, a)
        kids = np.stack([
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ], axis=1)
        return kids.reshape(-1, 3)

    def _vertex_parents(self):
        return np.concatenate(self.vparents)

    def restore_transitions(self, flagged):
        """Replace the green or blue families containing ``flagged`` cells by
        the red refinement of their parents."""
        trans = np.flatnonzero(self.kind >= GREEN)
        groups = {}
        for g in trans.tolist():
            groups.setdefault(tuple(self.pverts[g].tolist()), []).append(g)
        vparents = self._vertex_parents()
        parents, remove = [], set()
        for g in flagged.tolist():
            if g in remove:
                continue
            key = tuple(self.pverts[g].tolist())
            sibs = groups.get(key, [])
            expected = 2 if self.kind[g] == GREEN else 3
            if len(sibs) != expected:
                raise InvalidArgument(
                    f"transition cell {g} has {len(sibs)} sibling(s) for parent {key}; "
                    "genealogy is corrupt"
                )
            pedges = set(_edge_keys(np.array([key])).ravel().tolist())
            extra = set(self.cells[sibs].ravel().tolist()) - set(key)
            for v in extra:
                a, b = vparents[v]
                ek = (min(a, b) << 32) | max(a, b)
                if ek not in pedges:
                    raise InvalidArgument(f"vertex {v} is not a midpoint of parent {key}")
                self.mid[ek] = v
            parents.append(key)
            remove.update(sibs)
        P = np.array(parents, dtype=np.int64)
        self._new_vertices(_edge_keys(P).ravel())
        kids = self._red_children(P)
        keep = np.ones(len(self.cells), dtype=bool)
        keep[list(remove)] = False
        nk = len(kids)
        self.cells = np.concatenate([self.cells[keep], kids])
        self.kind = np.concatenate([self.kind[keep], np.full(nk, RED, dtype=np.int8)])
        self.pverts = np.concatenate([self.pverts[keep], np.repeat(P, 4, axis=0)])
        self.origin = np.concatenate([self.origin[keep], np.full(nk, -1, dtype=np.int64)])
        self.red = np.concatenate([self.red[keep], np.zeros(nk, dtype=bool)])

    def _bisected(self, keys):
        extra = np.fromiter(self.mid.keys(), dtype=np.int64, count=len(self.mid))
        forced = np.fromiter(self.forced, dtype=np.int64, count=len(self.forced))
        return np.union1d(np.union1d(keys[self.red].ravel(), extra), forced)

    def close(self):
        """Grow the set of bisected edges and red cells until every other
        cell is untouched, has only its longest edge bisected (green), or
        its longest edge and one more (blue)."""
        while True:
            keys = _edge_keys(self.cells)
            longest = np.argmax(_edge_lengths(self._all_coords(), self.cells), axis=1)
            bis = self._bisected(keys)
            hit = np.isin(keys, bis)
            nhit = hit.sum(axis=1)
            touched = (self.kind >= GREEN) & (self.red | (nhit >= 1))
            if touched.any():
                self.restore_transitions(np.flatnonzero(touched))
                continue
            rows = np.arange(len(keys))
            # a cell touched away from its longest edge gets that edge split too
            need = ~self.red & (nhit >= 1) & ~hit[rows, longest]
            if need.any():
                self.forced.update(keys[rows[need], longest[need]].tolist())
                continue
            promote = ~self.red & (nhit == 3)
            if not promote.any():
                return keys, hit, nhit, longest
            self.red |= promote

    def build(self):
        keys, hit, nhit, longest = self.close()
        self._new_vertices(keys[self.red].ravel())
        self._new_vertices(list(self.forced))
        red_idx = np.flatnonzero(self.red)
        green_idx = np.flatnonzero(~self.red & (nhit == 1))
        blue_idx = np.flatnonzero(~self.red & (nhit == 2))
        keep_idx = np.flatnonzero(~self.red & (nhit == 0))

        red_tri = self.cells[red_idx]
        red_kids = self._red_children(red_tri)

        # rotate so the longest (bisected) edge is (a, b)
        def rotated(idx):
            t = self.cells[idx]
            j = longest[idx]
            rows = np.arange(len(idx))
            return t[rows, j], t[rows, (j + 1) % 3], t[rows, (j + 2) % 3], j

        a, b, c, _ = rotated(green_idx)
        m = self._mids(a, b)
        green_kids = np.stack([np.column_stack([a, m, c]), np.column_stack([m, b, c])],
                              axis=1).reshape(-1, 3)
        green_parent = np.column_stack([a, b, c])

        a, b, c, j = rotated(blue_idx)
        ml = self._mids(a, b)
        on_bc = hit[blue_idx, (j + 1) % 3]
        blue_kids = np.empty((len(blue_idx), 3, 3), dtype=np.int64)
        if on_bc.any():
            s = on_bc
            m2 = self._mids(b[s], c[s])
            blue_kids[s] = np.stack([np.column_stack([a[s], ml[s], c[s]]),
                                     np.column_stack([ml[s], b[s], m2]),
                                     np.column_stack([ml[s], m2, c[s]])], axis=1)
        if (~on_bc).any():
            s = ~on_bc
            m2 = self._mids(c[s], a[s])
            blue_kids[s] = np.stack([np.column_stack([ml[s], b[s], c[s]]),
                                     np.column_stack([a[s], ml[s], m2]),
                                     np.column_stack([m2, ml[s], c[s]])], axis=1)
        blue_kids = blue_kids.reshape(-1, 3)
        blue_parent = np.column_stack([a, b, c])

        cells = np.concatenate([self.cells[keep_idx], red_kids, green_kids, blue_kids])
        kind = np.concatenate([
            self.kind[keep_idx],
            np.full(len(red_kids), RED, dtype=np.int8),
            np.full(len(green_kids), GREEN, dtype=np.int8),
            np.full(len(blue_kids), BLUE, dtype=np.int8),
        ])
        pverts = np.concatenate([
            self.pverts[keep_idx], np.repeat(red_tri, 4, axis=0),
            np.repeat(green_parent, 2, axis=0), np.repeat(blue_parent, 3, axis=0),
        ])
        parent = np.concatenate([
            self.origin[keep_idx], np.repeat(self.origin[red_idx], 4),
            np.repeat(self.origin[green_idx], 2), np.repeat(self.origin[blue_idx], 3),
        ])
        return Mesh(self._all_coords(), cells, kind=kind, parent_vertices=pverts,
                    parent=parent, vertex_parents=self._vertex_parents())


def refine_marked(mesh, mask):
    """Red-green refinement of the cells flagged in ``mask``.

    Returns a new conforming mesh.  Surviving vertices keep their indices and
    coordinates; new vertices are appended and are always midpoints of edges
    of the input mesh or of cells created during the same call
    (``vertex_parents`` records the edge).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (mesh.num_cells,):
        raise InvalidArgument(
            f"mask has length {mask.size}, expected {mesh.num_cells}"
        )
    if not mask.any():
        return mesh
    return _Refiner(mesh, mask).build()


def uniform_refine(mesh):
    return refine_marked(mesh, np.ones(mesh.num_cells, dtype=bool))


def prolong(values, fine):
    """Interpolate P1 vertex values onto a mesh produced by refinement.

    New vertices are edge midpoints, so linear interpolation is exact for the
    piecewise-linear function of the coarse mesh.
    """
    values = np.asarray(values, dtype=float)
    n0 = len(values)
    out = np.empty(fine.num_vertices)
    out[:n0] = values
    vp = fine.vertex_parents
    for v in range(n0, fine.num_vertices):
        a, b = vp[v]
        if a < 0:
            raise InvalidArgument(f"vertex {v} has no parent edge; not a refinement of the input")
        out[v] = 0.5 * (out[a] + out[b])
    return out
