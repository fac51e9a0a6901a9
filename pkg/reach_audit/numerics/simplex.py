"""Dense two-phase simplex for ``min c^T x  s.t.  A x = b, x >= 0``.

Bland's rule picks both the entering column (lowest index with negative reduced
cost) and the leaving row (lowest basic index among ratio-test ties), so the
method never cycles. Audit LPs are small, so determinism wins over speed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from reach_audit.config import DEFAULT_TOLERANCES, Tolerances
from reach_audit.data.base_models import SimplexStatus
from reach_audit.errors import InvalidInputError, NumericalError

logger = logging.getLogger(__name__)


@dataclass
class SimplexResult:
    status: SimplexStatus
    x: np.ndarray          # primal point (zeros unless OPTIMAL)
    duals: np.ndarray      # y with A^T y <= c at OPTIMAL; Farkas ray (A^T y <= 0, b^T y > 0) at INFEASIBLE
    objective: float
    basis: List[int]
    iterations: int


def _pivot(T: np.ndarray, basis: List[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    column = T[:, col].copy()
    column[row] = 0.0
    T -= np.outer(column, T[row])
    basis[row] = col


def _iterate(
    T: np.ndarray,
    basis: List[int],
    cost: np.ndarray,
    allowed: np.ndarray,
    tol: float,
    cap: int,
    iterations: int,
) -> tuple[SimplexStatus, int]:
    m = T.shape[0]
    while True:
        if iterations >= cap:
            raise NumericalError(f"simplex iteration cap {cap} exceeded", basis=basis)
        reduced = cost - cost[basis] @ T[:, :-1]
        candidates = np.flatnonzero(allowed & (reduced < -tol))
        if candidates.size == 0:
            return SimplexStatus.OPTIMAL, iterations
        col = int(candidates[0])
        column = T[:, col]
        positive = column > tol
        if not positive.any():
            return SimplexStatus.UNBOUNDED, iterations
        ratios = np.full(m, np.inf)
        ratios[positive] = T[positive, -1] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, basis, row, col)
        iterations += 1


def solve_standard_form(c, A, b, tolerances: Tolerances = DEFAULT_TOLERANCES) -> SimplexResult:
    """Solve ``min c^T x, A x = b, x >= 0`` by two-phase simplex.

    Phase 1 minimizes the sum of one artificial variable per row. Artificial
    columns stay in the tableau (barred from entering in phase 2) so the basis
    matrix is always square and the duals can be read back from it.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[0] != b.shape[0] or A.shape[1] != c.shape[0]:
        raise InvalidInputError(f"inconsistent LP shapes A{A.shape}, b{b.shape}, c{c.shape}")
    m, n = A.shape
    tol = tolerances.feasibility_tol
    cap = tolerances.iteration_factor * (m + n)

    sign = np.where(b < 0, -1.0, 1.0)
    full = np.hstack([A * sign[:, None], np.eye(m)])
    T = np.hstack([full, (b * sign)[:, None]])
    basis = list(range(n, n + m))

    phase1_cost = np.r_[np.zeros(n), np.ones(m)]
    status, iterations = _iterate(T, basis, phase1_cost, np.ones(n + m, dtype=bool), tol, cap, 0)
    phase1_value = float(phase1_cost[basis] @ T[:, -1])
    scale = max(1.0, float(np.abs(b).max())) if m else 1.0
    if phase1_value > tol * scale:
        y = np.linalg.solve(full[:, basis].T, phase1_cost[basis]) * sign
        logger.debug(f"Phase 1 optimum {phase1_value:.3e} > 0: infeasible after {iterations} pivots")
        return SimplexResult(SimplexStatus.INFEASIBLE, np.zeros(n), y, phase1_value, basis, iterations)

    # drive zero-level artificials out where a structural column allows it
    for row in range(m):
        if basis[row] >= n:
            magnitudes = np.abs(T[row, :n])
            if n and magnitudes.max() > tol:
                _pivot(T, basis, row, int(np.argmax(magnitudes)))
            else:
                logger.debug(f"Row {row} is redundant; its artificial stays basic at zero")

    phase2_cost = np.r_[c, np.zeros(m)]
    allowed = np.r_[np.ones(n, dtype=bool), np.zeros(m, dtype=bool)]
    status, iterations = _iterate(T, basis, phase2_cost, allowed, tol, cap, iterations)

    x_full = np.zeros(n + m)
    x_full[basis] = T[:, -1]
    y = np.linalg.solve(full[:, basis].T, phase2_cost[basis]) * sign
    objective = float(c @ x_full[:n])
    if status is SimplexStatus.UNBOUNDED:
        logger.debug("Phase 2 unbounded")
    return SimplexResult(status, x_full[:n], y, objective, basis, iterations)
