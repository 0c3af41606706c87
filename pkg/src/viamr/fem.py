"""P1 and DG0 finite element spaces on triangle meshes.

Assembly integrates P1 gradients exactly per cell.  Loads use the
edge-midpoint rule (exact for quadratics); error norms use a 6-point
degree-4 rule.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, InvalidArgument
from .linalg import as_csr, solve_spd

# Dunavant degree-4 rule, barycentric points and weights (weights sum to 1)
_Q4_A, _Q4_B = 0.445948490915965, 0.091576213509771
_Q4_W1, _Q4_W2 = 0.223381589678011, 0.109951743655322
QUAD4_POINTS = np.array([
    [_Q4_A, _Q4_A, 1 - 2 * _Q4_A],
    [_Q4_A, 1 - 2 * _Q4_A, _Q4_A],
    [1 - 2 * _Q4_A, _Q4_A, _Q4_A],
    [_Q4_B, _Q4_B, 1 - 2 * _Q4_B],
    [_Q4_B, 1 - 2 * _Q4_B, _Q4_B],
    [1 - 2 * _Q4_B, _Q4_B, _Q4_B],
])
QUAD4_WEIGHTS = np.array([_Q4_W1] * 3 + [_Q4_W2] * 3)

# edge midpoints v0v1, v1v2, v2v0
QUAD2_POINTS = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
QUAD2_WEIGHTS = np.full(3, 1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class FieldP1:
    """Continuous piecewise-linear function: one coefficient per vertex."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.num_vertices,):
            raise InvalidArgument(
                f"P1 field needs {self.mesh.num_vertices} values, got {values.shape}"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class FieldDG0:
    """Piecewise-constant function: one value per cell."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.num_cells,):
            raise InvalidArgument(
                f"DG0 field needs {self.mesh.num_cells} values, got {values.shape}"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class DirichletBC:
    ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).ravel()
        values = np.broadcast_to(np.asarray(self.values, dtype=float), ids.shape).copy()
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, mesh, g, ids=None):
        """Interpolate ``g(x, y)`` at the given (default: all boundary) vertices."""
        ids = mesh.boundary_vertex_ids if ids is None else np.asarray(ids)
        extra = np.setdiff1d(ids, mesh.boundary_vertex_ids)
        if extra.size:
            raise InvalidArgument(f"Dirichlet ids {extra[:5].tolist()} are not boundary vertices")
        x, y = mesh.vertices[ids].T
        return cls(ids, g(x, y))


def interpolate(mesh, fn):
    """P1 interpolant of ``fn(x, y)``."""
    x, y = mesh.vertices.T
    return FieldP1(mesh, np.broadcast_to(fn(x, y), x.shape))


def _gradients(mesh):
    """Barycentric gradients, shape (nc, 3, 2), and cell areas."""
    p = mesh.vertices[mesh.cells]
    area2 = 2.0 * mesh.signed_areas
    bad = np.flatnonzero(np.abs(area2) <= 1e-300)
    if bad.size:
        raise AssemblyError(f"degenerate cell {bad[0]} has zero area", cell=int(bad[0]))
    x, y = p[..., 0], p[..., 1]
    gx = np.roll(y, -1, axis=1) - np.roll(y, -2, axis=1)
    gy = np.roll(x, -2, axis=1) - np.roll(x, -1, axis=1)
    return np.stack([gx, gy], axis=2) / area2[:, None, None], 0.5 * area2


def local_stiffness(mesh):
    """(nc, 3, 3) element stiffness matrices."""
    g, area = _gradients(mesh)
    return area[:, None, None] * np.einsum("cik,cjk->cij", g, g)


def _assemble(mesh, local):
    rows = np.repeat(mesh.cells, 3, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, 3)).ravel()
    n = mesh.num_vertices
    return as_csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)))


def assemble_stiffness(mesh):
    """Global matrix with entries a_ij = integral of grad(phi_j) . grad(phi_i)."""
    return _assemble(mesh, local_stiffness(mesh))


def assemble_mass(mesh):
    """Consistent P1 mass matrix."""
    local = mesh.areas[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _assemble(mesh, local)


def lumped_mass(mesh):
    """Row-sum lumped mass: a third of the incident cell areas per vertex."""
    return np.bincount(mesh.cells.ravel(), weights=np.repeat(mesh.areas / 3.0, 3),
                       minlength=mesh.num_vertices)


def _quad_points(mesh, bary):
    p = mesh.vertices[mesh.cells]
    return np.einsum("qk,ckd->cqd", bary, p)


def assemble_load(mesh, f):
    """Vector of integrals of ``phi_i * f`` using the edge-midpoint rule."""
    pts = _quad_points(mesh, QUAD2_POINTS)
    fv = np.broadcast_to(f(pts[..., 0], pts[..., 1]), pts.shape[:2])
    local = mesh.areas[:, None] * np.einsum("q,cq,qk->ck", QUAD2_WEIGHTS, fv, QUAD2_POINTS)
    return np.bincount(mesh.cells.ravel(), weights=local.ravel(), minlength=mesh.num_vertices)


def assemble_neumann(mesh, g_n, edges):
    """Boundary term: integral of ``phi_i * g_n`` over the given boundary edges
    (two-point Gauss rule per edge)."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    out = np.zeros(mesh.num_vertices)
    if edges.size == 0:
        return out
    p, q = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    L = np.linalg.norm(q - p, axis=1)
    for t in (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)):
        x = (1 - t) * p + t * q
        gv = np.broadcast_to(g_n(x[:, 0], x[:, 1]), L.shape)
        np.add.at(out, edges[:, 0], 0.5 * L * gv * (1 - t))
        np.add.at(out, edges[:, 1], 0.5 * L * gv * t)
    return out


def apply_dirichlet(A, b, bc):
    """Symmetric elimination of Dirichlet rows and columns.

    Free rows of ``b`` are lifted by ``-A[:, D] g``; Dirichlet rows become
    identity rows with right-hand side ``g``.
    """
    A = sp.csr_matrix(A)
    b = np.array(b, dtype=float)
    n = A.shape[0]
    if bc.ids.size == 0:
        return as_csr(A), b
    g = np.zeros(n)
    g[bc.ids] = bc.values
    bmask = np.zeros(n, dtype=bool)
    bmask[bc.ids] = True
    b -= A @ g
    b[bmask] = bc.values
    keep = sp.diags((~bmask).astype(float))
    A2 = keep @ A @ keep + sp.diags(bmask.astype(float))
    A2 = as_csr(A2)
    A2.eliminate_zeros()
    return A2, b


def solve_pde(mesh, f, g, rel_tol=1e-12):
    """P1 Galerkin solution of -lap(u) = f with u = g on the whole boundary."""
    A = assemble_stiffness(mesh)
    b = assemble_load(mesh, f)
    bc = DirichletBC.from_function(mesh, g)
    A, b = apply_dirichlet(A, b, bc)
    return FieldP1(mesh, solve_spd(A, b, rel_tol=rel_tol))


def interpolate_dg0(u):
    """Cell averages of a P1 field (exact: mean of the three vertex values)."""
    return FieldDG0(u.mesh, u.values[u.mesh.cells].mean(axis=1))


def error_l2(mesh, u, exact):
    """L2 norm of ``u - exact`` with the degree-4 rule."""
    pts = _quad_points(mesh, QUAD4_POINTS)
    uh = np.einsum("qk,ck->cq", QUAD4_POINTS, u.values[mesh.cells])
    ex = np.broadcast_to(exact(pts[..., 0], pts[..., 1]), uh.shape)
    return float(np.sqrt(np.sum(mesh.areas[:, None] * QUAD4_WEIGHTS * (uh - ex) ** 2)))


def error_h1_semi(mesh, u, exact_gradient):
    """H1 seminorm of ``u - exact``; ``exact_gradient(x, y)`` returns (gx, gy)."""
    g, _ = _gradients(mesh)
    grad_uh = np.einsum("ck,ckd->cd", u.values[mesh.cells], g)
    pts = _quad_points(mesh, QUAD4_POINTS)
    gx, gy = exact_gradient(pts[..., 0], pts[..., 1])
    gx = np.broadcast_to(gx, pts.shape[:2])
    gy = np.broadcast_to(gy, pts.shape[:2])
    err2 = (grad_uh[:, None, 0] - gx) ** 2 + (grad_uh[:, None, 1] - gy) ** 2
    return float(np.sqrt(np.sum(mesh.areas[:, None] * QUAD4_WEIGHTS * err2)))
