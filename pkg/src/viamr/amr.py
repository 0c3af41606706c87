"""Tagging strategies that mark cells near the discrete free boundary.

VCES smooths the nodal active indicator with one implicit heat step and
tags cells whose average falls between two thresholds.  UDO tags the cells
whose vertices mix active and inactive values and grows that set by a
breadth-first search through vertex-sharing neighbours.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .fem import (
    DirichletBC,
    FieldDG0,
    FieldP1,
    apply_dirichlet,
    assemble_stiffness,
    interpolate_dg0,
    lumped_mass,
)
from .linalg import solve_spd
from .mesh import build_adjacency, vertex_avg_incident_diameter

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
UNIFORM, ADAPTIVE = "uniform", "adaptive"


@dataclass(frozen=True)
class VcesParams:
    alpha: float = 0.2
    beta: float = 0.8
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not 0.0 <= self.alpha < self.beta <= 1.0:
            raise InvalidArgument(f"need 0 <= alpha < beta <= 1, got ({self.alpha}, {self.beta})")
        if not self.tol > 0:
            raise InvalidArgument("tol must be positive")


@dataclass(frozen=True)
class UdoParams:
    depth: int = 3
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 0:
            raise InvalidArgument(f"depth must be a nonnegative integer, got {self.depth!r}")
        if not self.tol > 0:
            raise InvalidArgument("tol must be positive")


def _values(field):
    return field.values if isinstance(field, (FieldP1, FieldDG0)) else np.asarray(field, dtype=float)


def nodal_active_indicator(u, psi, tol=DEFAULT_TOL):
    """P1 field equal to 1 where ``u - psi < tol`` and 0 elsewhere."""
    s0 = (_values(u) - _values(psi) < tol).astype(float)
    return FieldP1(u.mesh, s0)


def vces_smooth(mesh, adj, s0):
    """One backward Euler step of the heat equation with a per-vertex step.

    The step at vertex i is half the square of the mean diameter of the
    cells around i.  Mass is lumped, and ``s0`` is kept on the boundary.
    """
    s0v = _values(s0)
    if s0v.shape != (mesh.num_vertices,):
        raise InvalidArgument("s0 must have one value per vertex")
    if adj is None:
        adj = build_adjacency(mesh)
    dt = 0.5 * vertex_avg_incident_diameter(mesh, adj) ** 2
    m = lumped_mass(mesh) / dt
    A = assemble_stiffness(mesh) + sp.diags(m)
    b = m * s0v
    bids = mesh.boundary_vertex_ids
    A, b = apply_dirichlet(A, b, DirichletBC(bids, s0v[bids]))
    s1 = solve_spd(A, b, rel_tol=1e-13)
    s1[bids] = s0v[bids]
    return FieldP1(mesh, s1)


def vces_tag(s1, params=None):
    """Cells whose average of ``s1`` lies strictly between alpha and beta."""
    params = params or VcesParams()
    sw = interpolate_dg0(s1).values
    return (params.alpha < sw) & (sw < params.beta)


def vces_mark(u, psi, mesh, adj=None, params=None):
    """Full VCES pipeline: indicator, smoothing, thresholding."""
    params = params or VcesParams()
    s0 = nodal_active_indicator(u, psi, params.tol)
    return vces_tag(vces_smooth(mesh, adj, s0), params)


def udo_border(sw):
    """Boolean cell mask of strictly fractional averages, 0 < sW < 1."""
    v = _values(sw)
    return (v > 0.0) & (v < 1.0)


def _as_mask(cells, num_cells):
    cells = np.asarray(cells)
    if cells.dtype == bool:
        if cells.shape != (num_cells,):
            raise InvalidArgument("cell mask has the wrong length")
        return cells.copy()
    mask = np.zeros(num_cells, dtype=bool)
    mask[cells.astype(np.int64)] = True
    return mask


def udo_dilate(adj, border, depth):
    """Grow a cell set ``depth`` times through shared vertices.

    ``border`` is a boolean mask or an array of cell ids; the result is a
    boolean mask.  Each level maps the frontier to its vertices and those
    vertices back to their cells.
    """
    if int(depth) != depth or depth < 0:
        raise InvalidArgument("depth must be a nonnegative integer")
    C = adj.incidence
    mask = _as_mask(border, adj.num_cells)
    frontier = mask.copy()
    for _ in range(int(depth)):
        if not frontier.any():
            break
        verts = (C.T @ frontier.astype(np.int8)) > 0
        reached = (C @ verts.astype(np.int8)) > 0
        frontier = reached & ~mask
        mask |= reached
    return mask


def udo_tag(u, psi, mesh, adj=None, params=None):
    """Border cells of the active set dilated to the configured depth."""
    params = params or UdoParams()
    if adj is None:
        adj = build_adjacency(mesh)
    s0 = nodal_active_indicator(u, psi, params.tol)
    border = udo_border(interpolate_dg0(s0))
    return udo_dilate(adj, border, params.depth)


def hybrid_decide(d_h, mesh, inactive_cells):
    """``"uniform"`` when d_h < h^2 with h the largest inactive cell diameter,
    ``"adaptive"`` otherwise."""
    if not d_h >= 0:
        raise InvalidArgument(f"Hausdorff distance must be nonnegative, got {d_h!r}")
    mask = _as_mask(inactive_cells, mesh.num_cells)
    if not mask.any():
        raise InvalidArgument("inactive cell set is empty")
    h = float(mesh.diameters[mask].max())
    return UNIFORM if d_h < h * h else ADAPTIVE
