"""Dense linear-algebra kernel.

Everything here works on float64 ``numpy`` arrays. Symmetric-positive-definite
solves go through a lower Cholesky factor (``SpdFactor``); ridge regression is
a solve with the regularized Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .exceptions import DegenerateColumn, DimensionError, NotPositiveDefinite, NumericError

__all__ = [
    "SpdFactor",
    "as_matrix",
    "ridge_solve",
    "spd_factorize",
    "eigen_extremes",
    "condition_number",
    "frobenius_norm",
    "cosine_similarity_matrix",
    "symmetrize",
]

# dense symmetric eigensolve up to this order, Lanczos above
DENSE_EIG_MAX = 512
SYMMETRY_RTOL = 1e-10


def as_matrix(a, name="matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array or raise."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _check_symmetric(a: np.ndarray, name: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - a.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise NumericError(f"{name} is not symmetric within {SYMMETRY_RTOL:g} relative")


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor ``L`` with ``A = L @ L.T``."""

    lower: np.ndarray

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T

    def solve(self, b) -> np.ndarray:
        """Solve ``A x = b`` for one or several right-hand sides."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.dimension:
            raise DimensionError(f"rhs has {b.shape[0]} rows, factor has order {self.dimension}")
        if self.dimension == 0:
            return np.zeros_like(b)
        return la.cho_solve((self.lower, True), b, check_finite=False)

    def solve_lower(self, b) -> np.ndarray:
        """Solve ``L x = b`` (half solve)."""
        b = np.asarray(b, dtype=np.float64)
        if self.dimension == 0:
            return np.zeros_like(b)
        return la.solve_triangular(self.lower, b, lower=True, check_finite=False)


def spd_factorize(a) -> SpdFactor:
    """Cholesky-factorize a symmetric positive definite matrix.

    The input is symmetrized before factorizing, since recursively updated
    Gram matrices drift slightly away from exact symmetry.

    Raises
    ------
    NotPositiveDefinite
        If the matrix is not numerically positive definite.
    """
    a = as_matrix(a, "A")
    _check_symmetric(a, "A")
    n = a.shape[0]
    if n == 0:
        return SpdFactor(np.zeros((0, 0)))
    try:
        lower = la.cholesky(symmetrize(a), lower=True, check_finite=False)
    except la.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if not np.all(np.diag(lower) > 0) or not np.all(np.isfinite(lower)):
        raise NotPositiveDefinite("Cholesky factor has a non-positive pivot")
    return SpdFactor(lower)


def ridge_solve(H, Y, lam: float) -> np.ndarray:
    """Ridge regression weights ``argmin_W ||HW - Y||_F^2 + lam ||W||_F^2``.

    Parameters
    ----------
    H : array of shape (N, L)
    Y : array of shape (N, C)
    lam : float
        Strictly positive regularization strength.

    Returns
    -------
    W : ndarray of shape (L, C)
    """
    H = as_matrix(H, "H")
    Y = as_matrix(Y, "Y")
    if H.shape[0] != Y.shape[0]:
        raise DimensionError(f"H has {H.shape[0]} rows but Y has {Y.shape[0]}")
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be positive, got {lam}")
    L = H.shape[1]
    gram = H.T @ H
    gram[np.diag_indices(L)] += lam
    return spd_factorize(symmetrize(gram)).solve(H.T @ Y)


def eigen_extremes(a) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    a = as_matrix(a, "A")
    _check_symmetric(a, "A")
    n = a.shape[0]
    if n == 0:
        raise DimensionError("eigen_extremes needs n >= 1")
    a = symmetrize(a)
    if n <= DENSE_EIG_MAX:
        return _dense_extremes(a)
    try:
        vals = eigsh(a, k=2, which="BE", tol=0, return_eigenvectors=False)
    except ArpackNoConvergence:
        return _dense_extremes(a)
    return float(vals.min()), float(vals.max())


def _dense_extremes(a: np.ndarray) -> tuple[float, float]:
    n = a.shape[0]
    lo = la.eigvalsh(a, subset_by_index=[0, 0], check_finite=False)[0]
    hi = la.eigvalsh(a, subset_by_index=[n - 1, n - 1], check_finite=False)[0]
    return float(lo), float(hi)


def condition_number(a) -> float:
    """Spectral condition number ``lambda_max / lambda_min`` of a symmetric matrix.

    Returns ``inf`` when the smallest eigenvalue is not positive.
    """
    lo, hi = eigen_extremes(a)
    if lo <= 0.0:
        return float("inf")
    return max(hi / lo, 1.0)


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(as_matrix(a), "fro"))


def cosine_similarity_matrix(B) -> np.ndarray:
    """Pairwise cosine similarity between the columns of ``B``."""
    B = as_matrix(B, "B")
    norms = np.linalg.norm(B, axis=0)
    bad = np.flatnonzero(norms <= 1e-12)
    if bad.size:
        raise DegenerateColumn(f"columns {bad.tolist()} have (near) zero norm")
    unit = B / norms
    c = np.clip(unit.T @ unit, -1.0, 1.0)
    c = symmetrize(c)
    np.fill_diagonal(c, 1.0)
    return c
