"""
Alternating least squares for biased matrix factorization.

Biases are fit first (global mean, then regularized item and user residual means);
the factors then minimize

    sum_(u,i) (y_ui - p_u^T q_i)^2 + lambda (||P||^2 + ||Q||^2)

over the bias residuals y, one ridge solve per user and per item each sweep.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from reach_audit.audits.parallel import run_parallel
from reach_audit.config import TRAINING_DEFAULTS
from reach_audit.data.base_models import BiasSign
from reach_audit.data.model_types import FactorModel
from reach_audit.data.ratings import RatingsTable
from reach_audit.errors import InvalidInputError
from reach_audit.numerics.linalg import ridge_solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = int(TRAINING_DEFAULTS.get("dim", 4))
    reg: float = float(TRAINING_DEFAULTS.get("lambda", 0.04))
    sweeps: int = int(TRAINING_DEFAULTS.get("sweeps", 30))
    seed: int = int(TRAINING_DEFAULTS.get("seed", 0))
    bias_sign: BiasSign = BiasSign.RESIDUAL
    tol: float = float(TRAINING_DEFAULTS.get("tol", 1e-9))

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidInputError(f"dim must be >= 1, got {self.dim}")
        if self.reg < 0:
            raise InvalidInputError(f"lambda must be >= 0, got {self.reg}")
        if self.sweeps < 1:
            raise InvalidInputError(f"sweeps must be >= 1, got {self.sweeps}")
        object.__setattr__(self, "bias_sign", BiasSign(self.bias_sign))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["bias_sign"] = self.bias_sign.value
        return data


@dataclass(eq=False)
class TrainResult:
    model: FactorModel
    objective: List[float] = field(default_factory=list)  # after each sweep
    sweeps_run: int = 0
    train_rmse: float = float("nan")


def _groups(keys: np.ndarray, count: int) -> List[np.ndarray]:
    """Row positions per key, in input order."""
    order = np.argsort(keys, kind="stable")
    bounds = np.searchsorted(keys[order], np.arange(count + 1))
    return [order[bounds[k]:bounds[k + 1]] for k in range(count)]


def _regularized_means(values: np.ndarray, groups: List[np.ndarray], reg: float) -> np.ndarray:
    out = np.zeros(len(groups))
    for k, rows in enumerate(groups):
        if rows.size:
            out[k] = values[rows].sum() / (reg + rows.size)
    return out


def _objective(y: np.ndarray, users: np.ndarray, items: np.ndarray, P: np.ndarray, Q: np.ndarray, reg: float) -> float:
    residual = y - np.einsum("kd,kd->k", P[users], Q[items])
    return float(residual @ residual + reg * (np.sum(P * P) + np.sum(Q * Q)))


def _solve_side(
    fixed: np.ndarray,
    groups: List[np.ndarray],
    partner: np.ndarray,
    y: np.ndarray,
    reg: float,
    jobs: int,
) -> np.ndarray:
    def solve(rows: np.ndarray) -> np.ndarray:
        return ridge_solve(fixed[partner[rows]].reshape(rows.size, fixed.shape[1]), y[rows], reg)

    solved = run_parallel(solve, groups, jobs)
    return np.vstack(solved) if solved else np.zeros((0, fixed.shape[1]))


def als_train(table: RatingsTable, cfg: TrainConfig = TrainConfig(), jobs: int = 1) -> TrainResult:
    """Fit a biased factor model to ``table``; every user and item of its id maps gets a row."""
    n, m = table.n_users, table.n_items
    if m == 0:
        raise InvalidInputError("cannot train on a table with no items")
    frame = table.frame
    users = frame["user_idx"].to_numpy(dtype=np.int64)
    items = frame["item_idx"].to_numpy(dtype=np.int64)
    r = frame["rating"].to_numpy(dtype=float)
    lam = cfg.reg

    mu = float(r.mean()) if r.size else 0.0
    by_item = _groups(items, m)
    by_user = _groups(users, n)
    b = _regularized_means(r - mu, by_item, lam)
    c = _regularized_means(r - mu - b[items], by_user, lam)
    y = r - mu - b[items] - c[users]

    rng = np.random.default_rng(cfg.seed)
    Q = rng.normal(0.0, 0.1, size=(m, cfg.dim))
    P = np.zeros((n, cfg.dim))

    history: List[float] = []
    for sweep in range(cfg.sweeps):
        P = _solve_side(Q, by_user, items, y, lam, jobs)
        Q = _solve_side(P, by_item, users, y, lam, jobs)
        value = _objective(y, users, items, P, Q, lam)
        logger.debug(f"ALS sweep {sweep + 1}: objective {value:.6e}")
        if history and history[-1] - value < cfg.tol * max(1.0, abs(history[-1])):
            history.append(value)
            break
        history.append(value)

    model = FactorModel(
        item_factors=Q,
        item_bias=b,
        mu=mu,
        reg=lam,
        bias_sign=cfg.bias_sign,
        item_ids=list(table.item_ids),
        user_factors=P,
        user_bias=c,
        user_ids=list(table.user_ids),
    )
    result = TrainResult(model, history, len(history), rmse(model, table))
    logger.info(f"ALS finished after {result.sweeps_run} sweeps (d={cfg.dim}, train RMSE {result.train_rmse:.4f})")
    return result


def _predict_rows(model: FactorModel, table: RatingsTable) -> Tuple[np.ndarray, np.ndarray]:
    item_index = {item_id: k for k, item_id in enumerate(model.external_item_ids)}
    user_index = {user_id: k for k, user_id in enumerate(model.user_ids or [])}
    frame = table.frame
    item_pos = frame["item"].map(item_index)
    known = item_pos.notna().to_numpy()
    item_pos = item_pos[known].to_numpy(dtype=np.int64)
    user_pos = frame["user"][known].map(user_index)
    pred = model.mu + model.item_bias[item_pos]
    if model.user_factors is not None:
        has_user = user_pos.notna().to_numpy()
        rows = user_pos[has_user].to_numpy(dtype=np.int64)
        pred[has_user] += model.user_bias[rows] + np.einsum(
            "kd,kd->k", model.user_factors[rows], model.item_factors[item_pos[has_user]]
        )
    return pred, frame["rating"].to_numpy(dtype=float)[known]


def rmse(model: FactorModel, table: RatingsTable) -> float:
    """Root mean squared prediction error on the rows of ``table`` whose item the model knows."""
    pred, actual = _predict_rows(model, table)
    if actual.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))
