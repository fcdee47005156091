"""Dense symmetric-positive-definite linear algebra.

Everything the rest of the library needs from LAPACK, behind a small
surface: Cholesky factorization with a cheap log-determinant, solves
through the factor (explicit matrix inversion is never used), and the
spectral quantities consumed by the stability nugget bound.

All functions are pure and operate on float64 arrays, so they are safe
to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class LinalgError(Exception):
    """Base class for failures in this module."""


class NotPositiveDefiniteError(LinalgError):
    """Cholesky broke down; the caller should add jitter or a nugget."""


class DimensionMismatchError(LinalgError):
    """Operands have incompatible shapes."""


class NoConvergenceError(LinalgError):
    """The symmetric eigensolver did not converge."""


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor of an SPD matrix.

    ``lower @ lower.T`` reconstructs the factored matrix and ``logdet``
    is its log-determinant, ``2 * sum(log(diag(lower)))``.
    """

    lower: np.ndarray
    logdet: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def cholesky(a) -> SpdFactor:
    """Factor a symmetric positive-definite matrix as ``L @ L.T``.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric matrix, intended SPD.

    Returns
    -------
    SpdFactor

    Raises
    ------
    NotPositiveDefiniteError
        When the factorization breaks down. This module never
        regularizes silently; escalation is the caller's decision.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    try:
        lower = scipy.linalg.cholesky(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None
    diag = np.diagonal(lower)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0.0):
        raise NotPositiveDefiniteError("nonpositive pivot in Cholesky factor")
    logdet = 2.0 * float(np.sum(np.log(diag)))
    return SpdFactor(lower=lower, logdet=logdet)


def solve_spd(factor: SpdFactor, b):
    """Solve ``A x = b`` given the Cholesky factor of ``A``.

    Two triangular solves; ``b`` may be a vector or a matrix of
    right-hand sides.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.n:
        raise DimensionMismatchError(
            f"right-hand side has leading dimension {b.shape[0]}, expected {factor.n}"
        )
    y = scipy.linalg.solve_triangular(factor.lower, b, lower=True, check_finite=False)
    return scipy.linalg.solve_triangular(factor.lower.T, y, lower=False, check_finite=False)


def spd_inverse(factor: SpdFactor) -> np.ndarray:
    """Explicit inverse of the factored matrix (for trace identities only).

    Prediction and likelihood paths must keep using :func:`solve_spd`;
    this exists for the gradient's elementwise trace sums where the full
    inverse is genuinely required.
    """
    return solve_spd(factor, np.eye(factor.n))


def largest_eigenvalue(a) -> float:
    """Largest eigenvalue of a symmetric matrix.

    Uses a full symmetric eigendecomposition; the matrices seen here
    are small (correlation matrices of at most a few hundred points).
    """
    a = np.asarray(a, dtype=float)
    try:
        evals = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(str(exc)) from None
    return float(evals[-1])


def condition_number(a) -> float:
    """2-norm condition number of a symmetric PSD matrix.

    Returns ``inf`` instead of raising when the smallest eigenvalue is
    at machine scale relative to the largest, because the stability
    nugget bound consumes that sentinel directly.
    """
    a = np.asarray(a, dtype=float)
    try:
        evals = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(str(exc)) from None
    lam_min = float(evals[0])
    lam_max = float(evals[-1])
    if lam_max <= 0.0:
        return np.inf
    if lam_min <= lam_max * a.shape[0] * np.finfo(float).eps:
        return np.inf
    return lam_max / lam_min
