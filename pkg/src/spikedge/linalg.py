"""Dense symmetric linear-algebra kernels with explicit numerical contracts.

Sample covariance, symmetric eigendecomposition, leave-one-out and
leave-two-out inverse covariances via Sherman-Morrison rank-one downdates,
and an eigenvalue-thresholded pseudo-inverse. Everything here is pure and
safe to call concurrently on distinct inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]

# Downdate denominators below DOWNDATE_TOL * n trigger a direct-inversion
# fallback; a failed fallback is reported as singular.
DOWNDATE_TOL = 1e-8
PSEUDO_RANK_TOL = 1e-10


class SingularMatrixError(ValueError):
    """A leave-one/two-out covariance is numerically singular."""


class EigenConvergenceError(RuntimeError):
    """Eigensolver did not converge.

    LAPACK does not expose an iteration count through numpy, so the
    diagnostic carries the failing off-diagonal index reported in the
    underlying error (or -1 when unavailable).
    """

    def __init__(self, message: str, iterations: int = -1) -> None:
        super().__init__(message)
        self.iterations = iterations


@dataclass(frozen=True, slots=True)
class EigenDecomposition:
    """Eigenvalues sorted descending, eigenvectors as matching columns."""

    eigenvalues: FloatArray
    eigenvectors: FloatArray


def validate_data(X: FloatArray) -> FloatArray:
    """Check the n x d observations-by-variables layout and finiteness."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"data matrix must be 2-d, got shape {X.shape}")
    n, d = X.shape
    if n < 2 or d < 1:
        raise ValueError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    if not np.isfinite(X).all():
        raise ValueError("data matrix contains non-finite entries")
    return X


def sample_covariance(X: FloatArray) -> FloatArray:
    """S = X'X / n with rows as observations, symmetrized against rounding."""
    X = validate_data(X)
    n = X.shape[0]
    S = X.T @ X / n
    return (S + S.T) / 2.0


def _check_symmetric(S: FloatArray, tol: float) -> FloatArray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if float(np.abs(S - S.T).max(initial=0.0)) > tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return (S + S.T) / 2.0


def sym_eigen(S: FloatArray, tol: float = 1e-8) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix, sorted descending.

    Raises EigenConvergenceError if the LAPACK solver fails, ValueError if
    the input is not symmetric within ``tol`` (relative to max |S_ij|).
    """
    S = _check_symmetric(S, tol)
    try:
        vals, vecs = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - hardware path
        raise EigenConvergenceError(f"eigendecomposition failed: {exc}") from exc
    order = np.arange(vals.shape[0] - 1, -1, -1)
    return EigenDecomposition(
        eigenvalues=np.ascontiguousarray(vals[order]),
        eigenvectors=np.ascontiguousarray(vecs[:, order]),
    )


def _downdate(A_inv: FloatArray, x: FloatArray, n: int) -> FloatArray | None:
    """Inverse of (A - x x'/n) from A_inv, or None when ill-conditioned."""
    w = A_inv @ x
    den = n - float(x @ w)
    if abs(den) < DOWNDATE_TOL * n:
        return None
    return A_inv + np.outer(w, w) / den


def _inverse_or_singular(M: FloatArray, context: str) -> FloatArray:
    try:
        M_inv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"{context}: matrix is singular") from exc
    resid = float(np.abs(M_inv @ M - np.eye(M.shape[0])).max())
    if resid > 1e-6:
        raise SingularMatrixError(
            f"{context}: inverse residual {resid:.2e} exceeds 1e-6"
        )
    return M_inv


def loo_inverse(X: FloatArray, j: int) -> FloatArray:
    """Inverse of S_j = (X'X - x_j x_j') / n, the leave-one-out covariance.

    The divisor stays n (not n-1) so gamma_n = p/n factors in downstream
    estimator formulas match. Computed by a rank-one downdate of S^{-1};
    falls back to direct inversion when the downdate denominator
    |n - x_j' S^{-1} x_j| drops below 1e-8 * n.
    """
    X = validate_data(X)
    n, d = X.shape
    if not d < n - 1:
        raise ValueError(f"leave-one-out needs d < n - 1, got n={n}, d={d}")
    if not 0 <= j < n:
        raise IndexError(f"row index {j} out of range for n={n}")
    S = sample_covariance(X)
    S_inv = _inverse_or_singular(S, "sample covariance")
    out = _downdate(S_inv, X[j], n)
    if out is None:
        S_j = S - np.outer(X[j], X[j]) / n
        out = _inverse_or_singular(S_j, f"leave-one-out covariance (j={j})")
    return (out + out.T) / 2.0


def lto_inverse(X: FloatArray, i: int, j: int) -> FloatArray:
    """Inverse of S_ij, the covariance with observations i and j removed.

    Two chained rank-one downdates; the result is independent of the
    downdate order. Divisor n as in loo_inverse.
    """
    X = validate_data(X)
    n, d = X.shape
    if not d < n - 2:
        raise ValueError(f"leave-two-out needs d < n - 2, got n={n}, d={d}")
    if i == j:
        raise ValueError("leave-two-out requires two distinct row indices")
    for idx in (i, j):
        if not 0 <= idx < n:
            raise IndexError(f"row index {idx} out of range for n={n}")
    S = sample_covariance(X)
    S_inv = _inverse_or_singular(S, "sample covariance")
    step = _downdate(S_inv, X[i], n)
    out = None if step is None else _downdate(step, X[j], n)
    if out is None:
        S_ij = S - (np.outer(X[i], X[i]) + np.outer(X[j], X[j])) / n
        out = _inverse_or_singular(S_ij, f"leave-two-out covariance (i={i}, j={j})")
    return (out + out.T) / 2.0


def pseudo_inverse(S: FloatArray, rank_tol: float = PSEUDO_RANK_TOL) -> FloatArray:
    """Moore-Penrose inverse of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below rank_tol * lambda_max are treated as zero.
    """
    dec = sym_eigen(S)
    vals, vecs = dec.eigenvalues, dec.eigenvectors
    lam_max = float(vals[0]) if vals.size else 0.0
    threshold = rank_tol * max(lam_max, 0.0)
    keep = vals > threshold
    inv_vals = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    out = (vecs * inv_vals) @ vecs.T
    return (out + out.T) / 2.0
