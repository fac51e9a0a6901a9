"""Dense linear-algebra kernels shared by every audit.

Matrices are plain ``numpy.ndarray`` objects. The helpers here validate shapes and
finiteness up front so downstream code can assume clean inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from reach_audit.config import DEFAULT_TOLERANCES
from reach_audit.errors import InvalidInputError

logger = logging.getLogger(__name__)

NEG_INF = -np.inf


def as_matrix(values, name: str = "matrix", cols: int | None = None) -> np.ndarray:
    """Coerce to a finite 2-D float array. Empty inputs become ``(0, cols)``."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, cols or 0)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise InvalidInputError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def as_vector(values, name: str = "vector", size: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if size is not None and arr.shape[0] != size:
        raise InvalidInputError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD truncated to the numerical rank."""

    u: np.ndarray       # rows x rank
    s: np.ndarray       # rank, nonincreasing, all > 0
    vt: np.ndarray      # rank x cols
    rank: int

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def svd(M, rtol: float | None = None) -> SvdResult:
    M = as_matrix(M, "M")
    rows, cols = M.shape
    if rows == 0 or cols == 0:
        return SvdResult(np.zeros((rows, 0)), np.zeros(0), np.zeros((0, cols)), 0)
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    if rtol is None:
        rtol = max(DEFAULT_TOLERANCES.rank_rtol, max(rows, cols) * np.finfo(float).eps)
    rank = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    return SvdResult(u[:, :rank], s[:rank], vt[:rank], rank)


def pseudoinverse(M, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse through the truncated SVD."""
    M = as_matrix(M, "M")
    res = svd(M, rtol)
    return (res.vt.T / res.s) @ res.u.T if res.rank else np.zeros((M.shape[1], M.shape[0]))


def pinv_norm(M, rtol: float | None = None) -> float:
    """Spectral norm of the pseudoinverse: 1 / smallest nonzero singular value."""
    res = svd(M, rtol)
    return float(1.0 / res.s[-1]) if res.rank else 0.0


def ridge_solve(design, target, lam: float = 0.0) -> np.ndarray:
    """argmin ||design p - target||^2 + lam ||p||^2.

    With ``lam == 0`` and a rank-deficient design the minimum-norm minimizer is
    returned, so the solve is total.
    """
    if lam < 0 or not np.isfinite(lam):
        raise InvalidInputError(f"ridge parameter must be finite and >= 0, got {lam}")
    X = as_matrix(design, "design")
    y = as_vector(target, "target", size=X.shape[0])
    k, d = X.shape
    if k == 0:
        return np.zeros(d)
    if lam > 0:
        return np.linalg.solve(X.T @ X + lam * np.eye(d), X.T @ y)
    sol, *_ = np.linalg.lstsq(X, y, rcond=None)
    return sol


def gram_inverse(X, lam: float) -> np.ndarray:
    """(X^T X + lam I)^-1, falling back to the pseudoinverse when singular."""
    X = as_matrix(X, "X")
    d = X.shape[1]
    gram = X.T @ X + lam * np.eye(d)
    if lam > 0:
        return np.linalg.inv(gram)
    res = svd(gram)
    if res.rank < d:
        logger.debug(f"Singular Gram matrix (rank {res.rank} < {d}); using pseudoinverse")
        return pseudoinverse(gram)
    return np.linalg.inv(gram)


def projector(B) -> np.ndarray:
    """Orthogonal projector onto the column span of B."""
    B = as_matrix(B, "B")
    res = svd(B)
    return res.u @ res.u.T if res.rank else np.zeros((B.shape[0], B.shape[0]))


def project_span(B, x) -> Tuple[np.ndarray, np.ndarray]:
    B = as_matrix(B, "B")
    x = as_vector(x, "x", size=B.shape[0])
    x_par = projector(B) @ x
    return x_par, x - x_par


def nth_largest(values: Iterable[float], N: int) -> float:
    """N-th largest value counting duplicates; -inf when there are fewer than N."""
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float).ravel()
    if arr.size < N:
        return NEG_INF
    return float(np.partition(arr, arr.size - N)[arr.size - N])


def nth_largest_rows(S: np.ndarray, N: int) -> np.ndarray:
    """Row-wise ``nth_largest``. Excluded entries should already be -inf."""
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    rows, cols = S.shape
    if cols < N:
        return np.full(rows, NEG_INF)
    return np.partition(S, cols - N, axis=1)[:, cols - N]
