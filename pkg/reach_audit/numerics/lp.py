"""Small linear programs behind the exact audits.

``lp_strict_feasible`` decides whether ``G p >= h + eps`` has a solution. It works
on the normalized dual

    max (h + eps)^T w   s.t.  G^T w = 0,  1^T w = 1,  w >= 0

whose basis has only ``cols(G) + 1`` rows. A positive optimum is a Farkas
certificate of emptiness; otherwise the optimal duals of that program are a
primal witness. When no normalized ``w`` exists at all the phase-1 ray gives a
direction ``p0`` with ``G p0 > 0`` which is scaled into a witness.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from reach_audit.config import DEFAULT_TOLERANCES, Tolerances
from reach_audit.data.base_models import LpStatus, SimplexStatus
from reach_audit.errors import InvalidInputError, NumericalError
from reach_audit.numerics.linalg import as_matrix, as_vector
from reach_audit.numerics.simplex import solve_standard_form

logger = logging.getLogger(__name__)


@dataclass
class LpFeasibility:
    status: LpStatus
    witness: Optional[np.ndarray] = None      # p with G p >= h + eps
    certificate: Optional[np.ndarray] = None  # w >= 0, G^T w = 0, (h + eps)^T w > 0
    eps: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status is LpStatus.FEASIBLE

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "witness": None if self.witness is None else self.witness.tolist(),
            "certificate": None if self.certificate is None else self.certificate.tolist(),
            "eps": self.eps,
        }


@dataclass
class L1Recourse:
    feasible: bool
    action: Optional[np.ndarray] = None
    cost: Optional[float] = None
    eps: float = 0.0


def default_eps(G: np.ndarray, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    row_norm = float(np.linalg.norm(G, axis=1).max()) if G.size else 0.0
    return tolerances.strict_margin(row_norm)


def lp_strict_feasible(
    G,
    h,
    eps: Optional[float] = None,
    strict: Optional[np.ndarray] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> LpFeasibility:
    """Decide ``G p >= h + eps`` (rows where ``strict`` is False get no margin).

    The returned witness or certificate is verified before it is handed back;
    a check failure raises ``NumericalError``.
    """
    G = as_matrix(G, "G")
    k, d = G.shape
    h = as_vector(h, "h", size=k)
    if eps is None:
        eps = default_eps(G, tolerances)
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    mask = np.ones(k, dtype=bool) if strict is None else np.asarray(strict, dtype=bool).reshape(-1)
    if mask.shape[0] != k:
        raise InvalidInputError("strict mask length must match rows of G")
    target = h + eps * mask

    if k == 0:
        return LpFeasibility(LpStatus.FEASIBLE, witness=np.zeros(d), eps=eps)

    A = np.vstack([G.T, np.ones((1, k))])
    b = np.r_[np.zeros(d), 1.0]
    res = solve_standard_form(-target, A, b, tolerances)
    check_tol = tolerances.certificate_tol

    if res.status is SimplexStatus.INFEASIBLE:
        # no normalized w with G^T w = 0: the ray gives p0 with G p0 >= y_last > 0
        p0 = -res.duals[:d]
        gaps = G @ p0
        if gaps.min() <= 0:
            raise NumericalError("phase-1 ray does not separate the rows of G", basis=res.basis)
        scale = 2.0 * max(0.0, float(np.max(target / gaps)))
        witness = scale * p0
    elif res.status is SimplexStatus.OPTIMAL:
        value = -res.objective
        if value > tolerances.feasibility_tol:
            w = np.clip(res.x, 0.0, None)
            residual = float(np.linalg.norm(G.T @ w))
            if residual > check_tol * (1.0 + float(np.abs(G).max())) or not target @ w > 0:
                raise NumericalError(
                    f"Farkas certificate failed verification (|G^T w| = {residual:.3e})", basis=res.basis
                )
            return LpFeasibility(LpStatus.INFEASIBLE, certificate=w, eps=eps)
        witness = -res.duals[:d]
    else:
        raise NumericalError("normalized dual program reported unbounded", basis=res.basis)

    slack = G @ witness - target
    if slack.min() < -check_tol:
        raise NumericalError(f"witness violates a constraint by {-slack.min():.3e}", basis=res.basis)
    return LpFeasibility(LpStatus.FEASIBLE, witness=witness, eps=eps)


def _bound_vector(bound, k: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(bound, dtype=float), (k,)).astype(float)
    if np.any(np.isnan(arr)):
        raise InvalidInputError("rating bounds must not be NaN")
    return arr


def min_l1_recourse(
    B,
    v0,
    G,
    h,
    a_hat,
    lo=-np.inf,
    hi=np.inf,
    eps: Optional[float] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> L1Recourse:
    """min ||a - a_hat||_1 s.t. G (v0 + B a) >= h + eps, lo <= a <= hi.

    The action is split as ``a = a_hat + u - v`` with ``u, v >= 0``; infinite
    bounds drop their rows.
    """
    G = as_matrix(G, "G")
    d = G.shape[1]
    B = as_matrix(B, "B")
    if B.shape[0] != d:
        raise InvalidInputError(f"B has {B.shape[0]} rows, expected {d}")
    k = B.shape[1]
    v0 = as_vector(v0, "v0", size=d)
    h = as_vector(h, "h", size=G.shape[0])
    a_hat = as_vector(a_hat, "a_hat", size=k)
    lo_v, hi_v = _bound_vector(lo, k), _bound_vector(hi, k)
    if np.any(lo_v > hi_v):
        raise InvalidInputError("lower rating bound exceeds upper bound")
    if eps is None:
        eps = default_eps(G, tolerances)

    M = G @ B
    r = G.shape[0]
    rows, rhs, surplus = [], [], []
    for idx in range(r):
        rows.append(np.r_[M[idx], -M[idx]])
        rhs.append(h[idx] + eps - G[idx] @ (v0 + B @ a_hat))
        surplus.append(-1.0)
    eye = np.eye(k)
    for j in range(k):
        if np.isfinite(hi_v[j]):
            rows.append(np.r_[eye[j], -eye[j]])
            rhs.append(hi_v[j] - a_hat[j])
            surplus.append(1.0)
        if np.isfinite(lo_v[j]):
            rows.append(np.r_[-eye[j], eye[j]])
            rhs.append(a_hat[j] - lo_v[j])
            surplus.append(1.0)

    if not rows:
        return L1Recourse(True, a_hat.copy(), 0.0, eps)
    structural = np.asarray(rows).reshape(len(rows), 2 * k)
    A = np.hstack([structural, np.diag(surplus)])
    cost = np.r_[np.ones(2 * k), np.zeros(len(rows))]
    res = solve_standard_form(cost, A, np.asarray(rhs), tolerances)
    if res.status is SimplexStatus.INFEASIBLE:
        return L1Recourse(False, eps=eps)
    if res.status is SimplexStatus.UNBOUNDED:
        raise NumericalError("l1 recourse program reported unbounded", basis=res.basis)
    u, v = res.x[:k], res.x[k:2 * k]
    action = a_hat + u - v
    return L1Recourse(True, action, float(np.abs(action - a_hat).sum()), eps)
