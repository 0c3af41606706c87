"""Reference problems with analytic data.

All data callables take coordinate arrays ``(x, y)`` and broadcast.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidArgument


@dataclass(frozen=True)
class ObstacleProblem:
    """Obstacle problem on the square ``[lo, hi]^2``.

    ``psi`` is ``None`` for a plain Poisson problem.  Optional exact data:
    ``exact_u``, ``exact_grad`` (returns a pair), ``exact_active`` (membership
    predicate of the true active set) and ``exact_free_boundary`` (``m`` ->
    ``(m, 2)`` points sampled on the true free boundary).
    """

    name: str
    lo: float
    hi: float
    f: Callable
    g: Callable
    psi: Optional[Callable] = None
    exact_u: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    exact_active: Optional[Callable] = None
    exact_free_boundary: Optional[Callable] = None
    metadata: dict = field(default_factory=dict)

    @property
    def is_vi(self):
        return self.psi is not None

    def boundary_samples(self, m=400):
        t = np.linspace(self.lo, self.hi, m)
        lo = np.full(m, self.lo)
        hi = np.full(m, self.hi)
        x = np.concatenate([t, t, lo, hi])
        y = np.concatenate([lo, hi, t, t])
        return x, y

    def check(self, m=400, tol=1e-12):
        """Sampled check of g >= psi on the boundary and exact_u >= psi.

        Returns a list of violation messages (empty when consistent).
        """
        issues = []
        if not self.is_vi:
            return issues
        x, y = self.boundary_samples(m)
        gap = self.g(x, y) - self.psi(x, y)
        if gap.min() < -tol:
            k = int(np.argmin(gap))
            issues.append(f"g < psi on boundary at ({x[k]:.3f}, {y[k]:.3f}) by {-gap[k]:.3e}")
        if self.exact_u is not None:
            t = np.linspace(self.lo, self.hi, m // 4 + 2)
            X, Y = np.meshgrid(t, t)
            d = self.exact_u(X, Y) - self.psi(X, Y)
            if d.min() < -tol:
                issues.append(f"exact_u < psi somewhere by {-d.min():.3e}")
        return issues


# Poisson reference: harmonic u* on (-1, 1)^2

def poisson_exact(x, y):
    return 2.0 * (1.0 + y) / ((3.0 + x) ** 2 + (1.0 + y) ** 2)


def poisson_exact_grad(x, y):
    den = (3.0 + x) ** 2 + (1.0 + y) ** 2
    gx = -4.0 * (1.0 + y) * (3.0 + x) / den ** 2
    gy = 2.0 / den - 4.0 * (1.0 + y) ** 2 / den ** 2
    return gx, gy


def poisson_reference():
    return ObstacleProblem(
        name="poisson", lo=-1.0, hi=1.0,
        f=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        g=poisson_exact, exact_u=poisson_exact, exact_grad=poisson_exact_grad,
    )


# Ball obstacle on [-2, 2]^2

@dataclass(frozen=True)
class BallConstants:
    a: float = 0.697965148223374
    A: float = 0.680259411891719
    B: float = 0.471519893402112
    r0: float = 0.9

    @property
    def psi0(self):
        return np.sqrt(1.0 - self.r0 ** 2)

    @property
    def dpsi0(self):
        return -self.r0 / self.psi0

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        inner = np.sqrt(np.maximum(1.0 - r * r, 0.0))
        return np.where(r <= self.r0, inner, self.psi0 + self.dpsi0 * (r - self.r0))

    def dpsi(self, r):
        r = np.asarray(r, dtype=float)
        inner = -r / np.sqrt(np.maximum(1.0 - r * r, 1e-300))
        return np.where(r <= self.r0, inner, self.dpsi0)

    def u(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            outer = -self.A * np.log(r) + self.B
        return np.where(r <= self.a, self.psi(r), outer)


def solve_ball_constants(r0=0.9, rmax=2.0):
    """Free-boundary radius and log-solution coefficients from smooth fit.

    Solves u(rmax) = 0, u(a) = psi(a), u'(a) = psi'(a) for
    u = -A log r + B with a < r0 (spherical part of the obstacle).  Eliminating
    A = -a psi'(a) and B = A log(rmax) leaves a scalar equation in a.
    """
    def residual(a):
        s = np.sqrt(1.0 - a * a)
        A = a * a / s
        return A * (np.log(rmax) - np.log(a)) - s

    a = brentq(residual, 1e-3, r0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    A = a * a / np.sqrt(1.0 - a * a)
    B = A * np.log(rmax)
    return BallConstants(a=a, A=A, B=B, r0=r0)


def ball_obstacle(constants=None):
    c = constants or BallConstants()

    def radius(x, y):
        return np.hypot(x, y)

    def psi(x, y):
        return c.psi(radius(x, y))

    def exact_u(x, y):
        return c.u(radius(x, y))

    def exact_grad(x, y):
        r = np.maximum(radius(x, y), 1e-300)
        dudr = np.where(r <= c.a, c.dpsi(r), -c.A / r)
        return dudr * x / r, dudr * y / r

    def exact_active(x, y):
        return radius(x, y) <= c.a

    def exact_free_boundary(m=4096):
        t = 2.0 * np.pi * np.arange(m) / m
        return c.a * np.column_stack([np.cos(t), np.sin(t)])

    return ObstacleProblem(
        name="ball", lo=-2.0, hi=2.0,
        f=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        g=exact_u, psi=psi, exact_u=exact_u, exact_grad=exact_grad,
        exact_active=exact_active, exact_free_boundary=exact_free_boundary,
        metadata={"a": c.a, "A": c.A, "B": c.B, "r0": c.r0},
    )


# Spiral obstacle

def spiral_psi(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.sin(2.0 * np.pi / r + np.pi / 2.0 - theta)
               + r * (r + 1.0) / (r - 2.0) - 3.0 * r + 3.6)
    return np.where(r == 0.0, 3.6, val)


def spiral_obstacle():
    """Spiral obstacle with zero load and zero boundary data on [-1, 1]^2.

    The obstacle has a pole at r = 2, so the domain must stay inside that
    circle.
    """
    return ObstacleProblem(
        name="spiral", lo=-1.0, hi=1.0,
        f=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        g=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        psi=spiral_psi,
        metadata={"boundary_data": "g = 0 (assumed)", "domain": "[-1,1]^2"},
    )


PROBLEMS = {
    "poisson": poisson_reference,
    "ball": ball_obstacle,
    "spiral": spiral_obstacle,
}
ONE_D_PROBLEMS = ("obstacle1d", "poisson1d")


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise InvalidArgument(
            f"unknown problem {name!r}; choose from {sorted(PROBLEMS) + list(ONE_D_PROBLEMS)}"
        ) from None


# 1D problems on [-1, 1]

FREE_BOUNDARY_1D = (2.0 - np.sqrt(2.0)) / 2.0


@dataclass(frozen=True, eq=False)
class IntervalMesh:
    """Uniform partition of [lo, hi] into ``n`` cells."""

    n: int
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidArgument("need at least 2 cells")

    @property
    def h(self):
        return (self.hi - self.lo) / self.n

    @property
    def nodes(self):
        return np.linspace(self.lo, self.hi, self.n + 1)

    @property
    def num_vertices(self):
        return self.n + 1

    @property
    def num_cells(self):
        return self.n

    @property
    def boundary_vertex_ids(self):
        return np.array([0, self.n])


def obstacle_1d_psi(x):
    return 0.5 - np.asarray(x, dtype=float) ** 2


def obstacle_1d_exact(x):
    b = FREE_BOUNDARY_1D
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    line = (0.5 - b * b) / (1.0 - b) * (1.0 - ax)
    return np.where(ax < b, 0.5 - x * x, line)


def poisson_1d_exact(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (x * x - 1.0)


def stiffness_1d(mesh):
    import scipy.sparse as sp

    from .linalg import as_csr

    n1 = mesh.num_vertices
    main = np.full(n1, 2.0)
    main[[0, -1]] = 1.0
    off = np.full(n1 - 1, -1.0)
    return as_csr(sp.diags([off, main, off], [-1, 0, 1]) / mesh.h)


def l2_error_1d(mesh, values, exact, breakpoints=()):
    """L2 error of the P1 interpolant ``values`` against ``exact``.

    Cells are split at ``breakpoints`` (kinks of the exact solution) and each
    piece is integrated with 5-point Gauss-Legendre.
    """
    gx, gw = np.polynomial.legendre.leggauss(5)
    nodes = mesh.nodes
    cuts = np.unique(np.concatenate([nodes, np.asarray(breakpoints, dtype=float)]))
    cuts = cuts[(cuts >= mesh.lo) & (cuts <= mesh.hi)]
    lo, hi = cuts[:-1], cuts[1:]
    x = 0.5 * (hi - lo)[:, None] * gx + 0.5 * (hi + lo)[:, None]
    w = 0.5 * (hi - lo)[:, None] * gw
    uh = np.interp(x, nodes, values)
    return float(np.sqrt(np.sum(w * (uh - exact(x)) ** 2)))


def obstacle_1d_discrete(n):
    """Discrete VI for the 1D obstacle on a uniform ``n``-cell mesh."""
    from .visolve import VIProblemDiscrete

    mesh = IntervalMesh(n)
    x = mesh.nodes
    A = stiffness_1d(mesh)
    b = np.zeros(mesh.num_vertices)
    return VIProblemDiscrete.from_system(mesh, A, b, obstacle_1d_psi(x),
                                         dirichlet_ids=[0, n], dirichlet_values=[0.0, 0.0])


def solve_1d_obstacle(n, params=None, return_result=False):
    """Solve the 1D obstacle problem; return ``(l2_error, gap)``.

    ``gap`` is the distance between the rightmost active node and the exact
    free boundary ``(2 - sqrt 2)/2``.
    """
    from .visolve import solve_vi, unconstrained_start

    problem = obstacle_1d_discrete(n)
    result = solve_vi(problem, unconstrained_start(problem), params)
    mesh = problem.mesh
    b = FREE_BOUNDARY_1D
    err = l2_error_1d(mesh, result.u.values, obstacle_1d_exact, breakpoints=(-b, b))
    active_x = mesh.nodes[result.active_vertex_ids]
    gap = float(abs(active_x.max() - b)) if active_x.size else float("nan")
    if return_result:
        return err, gap, result
    return err, gap


def solve_1d_poisson(n):
    """P1 solution of u'' = 1, u(+-1) = 0; returns the L2 error."""
    from .linalg import solve_spd

    mesh = IntervalMesh(n)
    A = stiffness_1d(mesh)
    # weak form of -u'' = -1: load is -h at interior nodes
    rhs = np.full(mesh.num_vertices, -mesh.h)
    inner = slice(1, n)
    u = np.zeros(mesh.num_vertices)
    u[inner] = solve_spd(A[inner][:, inner], rhs[inner], rel_tol=1e-13)
    return l2_error_1d(mesh, u, poisson_1d_exact)
