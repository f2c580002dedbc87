"""Small dense linear-algebra helpers used by every solver.

Matrices and vectors are plain ``numpy`` arrays. All solves go through an
SVD-based least-squares routine, so the normal matrix is never formed on the
plain least-squares path.
"""

from typing import NamedTuple

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionError, NonFiniteError

#: Relative singular-value cutoff used for rank decisions.
RANK_TOL = 1e-10


class LstsqResult(NamedTuple):
    solution: np.ndarray
    rank: int
    singular_values: np.ndarray

    @property
    def rank_deficient(self):
        return self.rank < self.solution.shape[0]

    @property
    def condition(self):
        return _cond_from_sv(self.singular_values)


def as_matrix(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return A


def as_vector(b, name="b"):
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty 1-D array, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return b


def _cond_from_sv(s):
    if s.size == 0 or s[0] == 0.0:
        return np.inf
    if s[-1] <= s[0] * RANK_TOL:
        return np.inf
    return float(s[0] / s[-1])


def lstsq(A, b, rcond=RANK_TOL):
    """Least-squares solve returning the solution plus rank diagnostics.

    Uses an SVD-based driver; for rank-deficient ``A`` the minimum-norm
    solution is returned and ``rank_deficient`` is set on the result.
    """
    A = as_matrix(A)
    b = as_vector(b)
    m, p = A.shape
    if b.shape[0] != m:
        raise DimensionError(f"A has {m} rows but b has length {b.shape[0]}")
    if m < p:
        raise DimensionError(f"underdetermined system: {m} rows < {p} unknowns")
    x, _, rank, s = np.linalg.lstsq(A, b, rcond=rcond)
    return LstsqResult(x, int(rank), s)


def svd_lstsq(A, b, rcond=RANK_TOL):
    """Unchecked SVD least squares for small, already validated systems.

    Same result as :func:`lstsq` on a tall finite ``A``, without the input
    checks; meant for inner solver loops.
    """
    U, s, Vt, info = lapack.dgesdd(A, compute_uv=1, full_matrices=0)
    if info != 0:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[-1] > rcond * s[0]:
        return LstsqResult(Vt.T @ ((U.T @ b) / s), s.size, s)
    keep = s > rcond * s[0] if s[0] > 0 else np.zeros(s.shape, dtype=bool)
    coef = (U.T @ b)[keep] / s[keep]
    return LstsqResult(Vt[keep].T @ coef, int(np.count_nonzero(keep)), s)


def solve_least_squares(A, b):
    """Return ``argmin ||A x - b||``; minimum-norm when ``A`` is rank deficient."""
    return lstsq(A, b).solution


def singular_values(A):
    return np.linalg.svd(as_matrix(A), compute_uv=False)


def condition_number(A):
    """Ratio of the largest to smallest singular value (``inf`` if singular)."""
    return _cond_from_sv(singular_values(A))


def rank_with_tolerance(A, tol=RANK_TOL):
    """Count singular values above ``tol`` times the largest one."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    s = singular_values(A)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))
