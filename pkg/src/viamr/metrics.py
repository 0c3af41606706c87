"""Free-boundary quality measures and a sequential partition balance report."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgument
from .fem import FieldP1


def _values(field):
    return field.values if isinstance(field, FieldP1) else np.asarray(field, dtype=float)


def cell_active_classification(u, psi, tol=1e-12, mesh=None):
    """Boolean per-cell array: True when all three vertices have u - psi < tol."""
    mesh = mesh if mesh is not None else u.mesh
    nodal = _values(u) - _values(psi) < tol
    return nodal[mesh.cells].all(axis=1)


def edge_cells(mesh):
    """(ne, 2) incident cells of every edge in ``mesh.edges``; -1 pads boundary edges."""
    ce = mesh.cell_edges.ravel()
    cells = np.repeat(np.arange(mesh.num_cells), 3)
    order = np.argsort(ce, kind="stable")
    ce, cells = ce[order], cells[order]
    out = np.full((len(mesh.edges), 2), -1, dtype=np.int64)
    first = np.ones(ce.size, dtype=bool)
    first[1:] = ce[1:] != ce[:-1]
    out[ce[first], 0] = cells[first]
    out[ce[~first], 1] = cells[~first]
    return out


@dataclass(frozen=True, eq=False)
class FreeBoundary:
    edges: np.ndarray
    points: np.ndarray

    @property
    def empty(self):
        return len(self.edges) == 0


def extract_free_boundary(mesh, active, m=16):
    """Edges between an active and an inactive cell, each sampled at ``m``
    equally spaced points (endpoints included)."""
    active = np.asarray(active, dtype=bool)
    if active.shape != (mesh.num_cells,):
        raise InvalidArgument("classification must have one entry per cell")
    if m < 2:
        raise InvalidArgument("need at least 2 samples per edge")
    ec = edge_cells(mesh)
    interior = ec[:, 1] >= 0
    sep = np.zeros(len(ec), dtype=bool)
    sep[interior] = active[ec[interior, 0]] != active[ec[interior, 1]]
    edges = mesh.edges[sep]
    t = np.linspace(0.0, 1.0, m)[None, :, None]
    p = mesh.vertices[edges[:, 0]][:, None, :]
    q = mesh.vertices[edges[:, 1]][:, None, :]
    points = ((1.0 - t) * p + t * q).reshape(-1, 2)
    return FreeBoundary(edges, points)


def _subtriangle_centroids(k):
    """Barycentric centroids of the k^2 congruent subtriangles of a triangle."""
    pts = []
    for i in range(k):
        for j in range(k - i):
            # upward triangle (i, j), (i+1, j), (i, j+1)
            pts.append(((3 * i + 1) / (3 * k), (3 * j + 1) / (3 * k)))
            if i + j < k - 1:
                # downward triangle (i+1, j), (i, j+1), (i+1, j+1)
                pts.append(((3 * i + 2) / (3 * k), (3 * j + 2) / (3 * k)))
    lam = np.array(pts)
    return np.column_stack([1.0 - lam.sum(axis=1), lam[:, 0], lam[:, 1]])


def jaccard(mesh, active, exact_region, k=16, chunk=4096):
    """|A ∩ E| / |A ∪ E| for the union A of active cells and the region E.

    Each cell is split into ``k^2`` congruent subtriangles; a subtriangle
    belongs to A if its cell is active and to E if its centroid satisfies
    ``exact_region(x, y)``.  Returns 1.0 when both regions are empty.
    """
    active = np.asarray(active, dtype=bool)
    if active.shape != (mesh.num_cells,):
        raise InvalidArgument("classification must have one entry per cell")
    bary = _subtriangle_centroids(k)
    sub_area = mesh.areas / (k * k)
    inter = union = 0.0
    for s in range(0, mesh.num_cells, chunk):
        sl = slice(s, s + chunk)
        p = mesh.vertices[mesh.cells[sl]]
        pts = np.einsum("qk,ckd->cqd", bary, p)
        inside = np.asarray(exact_region(pts[..., 0], pts[..., 1]), dtype=bool)
        n_in = inside.sum(axis=1)
        a = active[sl]
        inter += np.sum(sub_area[sl][a] * n_in[a])
        union += np.sum(sub_area[sl][a] * (k * k)) + np.sum(sub_area[sl][~a] * n_in[~a])
    if union == 0.0:
        return 1.0
    return float(inter / union)


def hausdorff(X, Y):
    """Symmetric Hausdorff distance between two finite point sets."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    if len(X) == 0 or len(Y) == 0:
        raise InvalidArgument("hausdorff needs two nonempty point sets")
    dxy = cKDTree(Y).query(X)[0].max()
    dyx = cKDTree(X).query(Y)[0].max()
    return float(max(dxy, dyx))


def partition_cells(mesh, parts):
    """Recursive coordinate bisection of cell centroids into ``parts`` groups.

    Each split cuts the longer bounding-box side and sizes the halves in
    proportion to the number of parts on each side, so part sizes differ by
    at most one cell.  Returns one part id per cell.
    """
    if int(parts) != parts or parts < 1:
        raise InvalidArgument("parts must be a positive integer")
    if parts > mesh.num_cells:
        raise InvalidArgument("more parts than cells")
    owner = np.empty(mesh.num_cells, dtype=np.int64)
    c = mesh.centroids

    def split(ids, p, first):
        if p == 1:
            owner[ids] = first
            return
        pts = c[ids]
        axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        order = ids[np.lexsort((pts[:, 1 - axis], pts[:, axis]))]
        p_left = p // 2
        # the first (len % p) parts get one extra cell
        q, r = divmod(len(ids), p)
        n_left = p_left * q + min(p_left, r)
        split(order[:n_left], p_left, first)
        split(order[n_left:], p - p_left, first + p_left)

    split(np.arange(mesh.num_cells), int(parts), 0)
    return owner


@dataclass(frozen=True)
class PartitionReport:
    active: tuple
    inactive: tuple
    ratios: tuple

    @property
    def spread(self):
        return max(self.ratios) - min(self.ratios)

    def rows(self):
        return [
            {"part": i, "active": a, "inactive": n, "ratio": r}
            for i, (a, n, r) in enumerate(zip(self.active, self.inactive, self.ratios))
        ]


def partition_report(mesh, active, parts, owner=None):
    """Per-part active and inactive cell counts and inactive-share ratios.

    The ratio of a part is its inactive count over the total inactive count.
    """
    active = np.asarray(active, dtype=bool)
    if active.shape != (mesh.num_cells,):
        raise InvalidArgument("classification must have one entry per cell")
    if owner is None:
        owner = partition_cells(mesh, parts)
    act = np.bincount(owner[active], minlength=parts)
    ina = np.bincount(owner[~active], minlength=parts)
    total = ina.sum()
    ratios = ina / total if total else np.zeros(parts)
    return PartitionReport(tuple(int(v) for v in act), tuple(int(v) for v in ina),
                           tuple(float(r) for r in ratios))
