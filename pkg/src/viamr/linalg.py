"""Sparse symmetric positive definite solves for Galerkin systems.

Matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted, unique
column indices).  The solve is Jacobi-preconditioned conjugate gradients
with the residual contract checked on the way out.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import InvalidArgument, SolverFailure

DEFAULT_RTOL = 1e-10
ABS_FLOOR = 1e-14


def as_csr(A):
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def solve_spd(A, b, rel_tol=DEFAULT_RTOL, x0=None, restarts=3):
    """Solve ``A x = b`` for SPD ``A``.

    Returns ``x`` with ``||A x - b|| <= rel_tol * ||b||`` (or ``<= 1e-14``
    when ``b = 0``).  Raises :class:`SolverFailure` if the contract cannot be
    met within ``10 n`` iterations per attempt.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise InvalidArgument(f"dimension mismatch: A is {A.shape}, b is {b.shape}")
    if not 0.0 < rel_tol < 1.0:
        raise InvalidArgument("rel_tol must lie in (0, 1)")
    bnorm = np.linalg.norm(b)
    target = max(rel_tol * bnorm, ABS_FLOOR)
    if bnorm == 0.0 and x0 is None:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d <= 0.0):
        raise SolverFailure("matrix has a non-positive diagonal entry; not SPD")
    M = sp.diags(1.0 / d)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    res = np.linalg.norm(b - A @ x)
    for _ in range(restarts + 1):
        if res <= target:
            return x
        # cg stops on the recursively updated residual; aim slightly below the
        # target so rounding drift in the true residual stays inside the contract
        x, _ = cg(A, b, x0=x, rtol=0.0, atol=0.5 * target, maxiter=10 * n, M=M)
        res = np.linalg.norm(b - A @ x)
    if res <= target:
        return x
    raise SolverFailure(
        f"CG did not reach residual {target:.3e} (got {res:.3e}) in {10 * n} iterations",
        residual=res,
    )


def extract_submatrix(A, rows_cols):
    """Principal submatrix of ``A`` on the index set ``rows_cols``."""
    A = sp.csr_matrix(A)
    idx = np.asarray(rows_cols, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= A.shape[0]):
        raise InvalidArgument("index out of range")
    if np.unique(idx).size != idx.size:
        raise InvalidArgument("indices must be unique")
    return as_csr(A[idx][:, idx])
