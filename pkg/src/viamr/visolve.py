"""Reduced-space active-set Newton method with projected line search for the
discrete obstacle problem.

The unknown is shifted to ``w = u - psi`` on the free (non-Dirichlet)
vertices so the bound becomes ``w >= 0`` and the problem is the
complementarity system ``F(w) >= 0, w >= 0, w * F(w) = 0`` with
``F(w) = A (w + psi) - b``.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidArgument, SolverFailure
from .fem import (
    DirichletBC,
    FieldP1,
    apply_dirichlet,
    assemble_load,
    assemble_stiffness,
    interpolate,
)
from .linalg import extract_submatrix, solve_spd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    atol: float = 1e-12
    rtol: float = 1e-8
    stol: float = 1e-12
    vi_zero_tol: float = 1e-12
    max_iterations: int = 200
    armijo_sigma: float = 1e-4
    armijo_beta: float = 0.5
    min_step: float = 1e-12
    linear_rtol: float = 1e-10

    def __post_init__(self):
        for name in ("atol", "rtol", "stol", "vi_zero_tol", "min_step", "linear_rtol"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if not 0 < self.armijo_sigma < 1 or not 0 < self.armijo_beta < 1:
            raise InvalidArgument("armijo_sigma and armijo_beta must lie in (0, 1)")
        if self.max_iterations < 1:
            raise InvalidArgument("max_iterations must be positive")


class VIProblemDiscrete:
    """Assembled obstacle problem restricted to its free vertices.

    Parameters
    ----------
    mesh : Mesh or IntervalMesh
    A, b : stiffness and load after Dirichlet elimination
    psi : obstacle values at every vertex
    dirichlet_mask, dirichlet_values : boundary vertices and their values
    """

    def __init__(self, mesh, A, b, psi, dirichlet_mask, dirichlet_values):
        n = mesh.num_vertices
        psi = np.asarray(psi, dtype=float)
        dirichlet_mask = np.asarray(dirichlet_mask, dtype=bool)
        if A.shape != (n, n) or b.shape != (n,) or psi.shape != (n,) or dirichlet_mask.shape != (n,):
            raise InvalidArgument("system dimensions do not match the mesh")
        g = np.zeros(n)
        g[dirichlet_mask] = dirichlet_values
        bad = dirichlet_mask & (g < psi)
        if bad.any():
            v = int(np.flatnonzero(bad)[0])
            raise InvalidArgument(
                f"boundary data below obstacle at vertex {v}: g={g[v]:.6g} < psi={psi[v]:.6g}"
            )
        self.mesh = mesh
        self.A = A
        self.b = b
        self.psi = psi
        self.dirichlet_mask = dirichlet_mask
        self.dirichlet_values = g[dirichlet_mask]
        self.free = np.flatnonzero(~dirichlet_mask)
        self.A_free = extract_submatrix(A, self.free)
        self.b_free = b[self.free]
        self.psi_free = psi[self.free]

    @classmethod
    def from_system(cls, mesh, A, b, psi, dirichlet_ids, dirichlet_values):
        bc = DirichletBC(dirichlet_ids, dirichlet_values)
        A2, b2 = apply_dirichlet(A, b, bc)
        mask = np.zeros(mesh.num_vertices, dtype=bool)
        mask[bc.ids] = True
        vals = np.zeros(mesh.num_vertices)
        vals[bc.ids] = bc.values
        return cls(mesh, A2, b2, psi, mask, vals[mask])

    @classmethod
    def from_problem(cls, mesh, problem):
        """Assemble a P1 discretisation of an :class:`ObstacleProblem`."""
        if not problem.is_vi:
            raise InvalidArgument(f"problem {problem.name!r} has no obstacle")
        A = assemble_stiffness(mesh)
        b = assemble_load(mesh, problem.f)
        bc = DirichletBC.from_function(mesh, problem.g)
        psi = interpolate(mesh, problem.psi).values
        return cls.from_system(mesh, A, b, psi, bc.ids, bc.values)

    @property
    def num_free(self):
        return self.free.size

    def residual(self, w):
        """F(w) = A (w + psi) - b on free indices."""
        return self.A_free @ (w + self.psi_free) - self.b_free

    def to_u(self, w):
        u = np.empty(self.mesh.num_vertices)
        u[self.dirichlet_mask] = self.dirichlet_values
        u[self.free] = w + self.psi_free
        return u


class LineSearchResult(NamedTuple):
    step: Optional[float]
    w: np.ndarray
    merit: float

    @property
    def ok(self):
        return self.step is not None


@dataclass
class VISolveResult:
    u: FieldP1
    active_ids: np.ndarray
    inactive_ids: np.ndarray
    iterations: int
    residual_history: list
    converged_reason: str
    w: np.ndarray
    F: np.ndarray
    active_history: list = field(default_factory=list)
    min_active_residual: float = float("nan")

    @property
    def converged(self):
        return self.converged_reason in ("atol", "rtol", "stol")

    @property
    def active_vertex_ids(self):
        return self.active_ids

    def complementarity(self):
        """Infinity norm of min(w, F(w))."""
        if self.w.size == 0:
            return 0.0
        return float(np.max(np.abs(np.minimum(self.w, self.F))))


def project_feasible(w):
    """Clamp at zero: the projection onto {w >= 0}."""
    return np.maximum(np.asarray(w, dtype=float), 0.0)


def classify_active(w, F, zero_tol):
    """Index sets (active, inactive): active means w ~ 0 and F > 0."""
    w = np.asarray(w)
    F = np.asarray(F)
    if w.shape != F.shape:
        raise InvalidArgument("w and F lengths differ")
    act = (w <= zero_tol) & (F > 0)
    return np.flatnonzero(act), np.flatnonzero(~act)


def reduced_residual(w, F, zero_tol):
    """F where w > 0, min(F, 0) where w is (numerically) zero."""
    w = np.asarray(w)
    F = np.asarray(F, dtype=float)
    return np.where(w <= zero_tol, np.minimum(F, 0.0), F)


def newton_step(problem, w, active, inactive, F=None, linear_rtol=1e-10):
    """Search direction: zero on ``active``, reduced Newton system on ``inactive``."""
    d = np.zeros_like(w, dtype=float)
    inactive = np.asarray(inactive, dtype=np.int64)
    if inactive.size == 0:
        return d
    if F is None:
        F = problem.residual(w)
    J = extract_submatrix(problem.A_free, inactive)
    d[inactive] = solve_spd(J, -F[inactive], rel_tol=linear_rtol)
    return d


def merit(problem, w, zero_tol):
    return float(np.linalg.norm(reduced_residual(w, problem.residual(w), zero_tol)))


def line_search(problem, w, d, params, merit_w=None):
    """Projected backtracking search on ||F_hat||_2.

    Accepts the first step in 1, 1/2, 1/4, ... with
    ``||F_hat(pi(w + s d))|| <= (1 - sigma s) ||F_hat(w)||``.  A step below
    ``min_step`` is a failure (``step is None``).
    """
    zt = params.vi_zero_tol
    if merit_w is None:
        merit_w = merit(problem, w, zt)
    step = 1.0
    while step >= params.min_step:
        trial = project_feasible(w + step * d)
        m = merit(problem, trial, zt)
        if m <= (1.0 - params.armijo_sigma * step) * merit_w:
            return LineSearchResult(step, trial, m)
        step *= params.armijo_beta
    return LineSearchResult(None, w, merit_w)


def unconstrained_start(problem, rel_tol=1e-10):
    """Unconstrained Galerkin solution lifted onto the feasible set."""
    u = solve_spd(problem.A, problem.b, rel_tol=rel_tol)
    u[problem.free] = np.maximum(u[problem.free], problem.psi_free)
    u[problem.dirichlet_mask] = problem.dirichlet_values
    return FieldP1(problem.mesh, u)


def solve_vi(problem, u0, params=None, record_active_sets=False, monitor=None):
    """Run the reduced-space Newton iteration from ``u0``.

    ``monitor``, if given, is a writable text stream that receives one CSV
    row ``iteration,residual_norm,active,free`` per iteration (header first).

    Convergence: ``||F_hat|| <= atol`` (reason ``"atol"``), ``<= rtol *
    ||F_hat(w0)||`` (``"rtol"``), or an accepted step shorter than ``stol``
    (``"stol"``).  Failures return a result with reason
    ``"max_iterations"`` or ``"line_search"``.
    """
    params = params or SolverParams()
    zt = params.vi_zero_tol
    u0 = u0.values if isinstance(u0, FieldP1) else np.asarray(u0, dtype=float)
    w = project_feasible(u0[problem.free] - problem.psi_free)
    F = problem.residual(w)
    norm = float(np.linalg.norm(reduced_residual(w, F, zt)))
    norm0 = norm
    history = [norm]
    active_history = []
    nfree = problem.num_free
    if monitor is not None:
        monitor.write("iteration,residual_norm,active,free\n")
    reason = "max_iterations"
    step_norm = np.inf
    k = 0
    while True:
        active, inactive = classify_active(w, F, zt)
        if record_active_sets:
            active_history.append(problem.free[active])
        logger.debug("%3d VI function norm %.12e  Active lower constraints %d/%d",
                     k, norm, active.size, nfree)
        if monitor is not None:
            monitor.write(f"{k},{norm:.12e},{active.size},{nfree}\n")
        if norm <= params.atol:
            reason = "atol"
            break
        if norm <= params.rtol * norm0:
            reason = "rtol"
            break
        if step_norm <= params.stol:
            reason = "stol"
            break
        if k >= params.max_iterations:
            reason = "max_iterations"
            break
        try:
            d = newton_step(problem, w, active, inactive, F=F, linear_rtol=params.linear_rtol)
        except SolverFailure as exc:
            logger.warning("reduced Newton system failed: %s", exc)
            reason = "linear_solve"
            break
        ls = line_search(problem, w, d, params, merit_w=norm)
        if not ls.ok:
            reason = "line_search"
            break
        step_norm = float(np.linalg.norm(ls.w - w))
        w = ls.w
        F = problem.residual(w)
        norm = ls.merit
        history.append(norm)
        k += 1
    active, inactive = classify_active(w, F, zt)
    min_active = float(F[active].min()) if active.size else float("nan")
    logger.info("VI solve: %s after %d iterations, |F_hat| = %.3e, active %d/%d",
                reason, k, norm, active.size, nfree)
    return VISolveResult(
        u=FieldP1(problem.mesh, problem.to_u(w)),
        active_ids=problem.free[active],
        inactive_ids=problem.free[inactive],
        iterations=k,
        residual_history=history,
        converged_reason=reason,
        w=w,
        F=F,
        active_history=active_history,
        min_active_residual=min_active,
    )
