"""Predictions, the top-N policy, the least-squares user update and item regions."""

from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

import numpy as np

from reach_audit.data.model_types import FactorModel, RatingHistory
from reach_audit.errors import InvalidInputError
from reach_audit.numerics.linalg import as_vector, ridge_solve

logger = logging.getLogger(__name__)


def _omega_array(omega: Sequence[int] | np.ndarray) -> np.ndarray:
    return np.asarray(list(omega) if not isinstance(omega, np.ndarray) else omega, dtype=np.int64).reshape(-1)


def unseen_items(model: FactorModel, omega: Sequence[int] | np.ndarray) -> np.ndarray:
    """Ascending item ids not in ``omega``."""
    mask = np.ones(model.m, dtype=bool)
    mask[_omega_array(omega)] = False
    return np.flatnonzero(mask)


def predict(model: FactorModel, p, c_u: float, i: int) -> float:
    i = model.check_item(i)
    p = as_vector(p, "p", size=model.d)
    return float(model.mu + model.item_bias[i] + c_u + model.item_factors[i] @ p)


def predict_all(model: FactorModel, p, c_u: float = 0.0) -> np.ndarray:
    p = as_vector(p, "p", size=model.d)
    return model.mu + model.item_bias + c_u + model.item_factors @ p


def user_factor(model: FactorModel, hist: RatingHistory) -> np.ndarray:
    """Ridge user update on the history; zero vector for an empty history."""
    hist.validate_against(model)
    if len(hist) == 0:
        return np.zeros(model.d)
    omega = hist.omega
    offset = model.item_bias[omega] + hist.c_u + model.mu
    target = hist.ratings + model.bias_sign.multiplier * offset
    return ridge_solve(model.item_factors[omega], target, model.reg)


def top_n(model: FactorModel, p, c_u: float, omega: Sequence[int] | np.ndarray, N: int) -> List[int]:
    """The N best unseen items, ties broken by lower item id.

    mu and c_u shift every prediction equally, so only q^T p + b is ranked.
    """
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    p = as_vector(p, "p", size=model.d)
    candidates = unseen_items(model, omega)
    scores = model.item_factors[candidates] @ p + model.item_bias[candidates]
    order = np.lexsort((candidates, -scores))
    return candidates[order[:N]].tolist()


def item_region(model: FactorModel, i: int, omega: Sequence[int] | np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rows q_i - q_j and offsets b_j - b_i for every unseen j != i, ascending j.

    Item i is the top-1 unseen item at p exactly when G p > h.
    """
    i = model.check_item(i)
    omega = _omega_array(omega)
    if np.isin(i, omega):
        raise InvalidInputError(f"item {i} is in the observed set; its region is undefined")
    others = unseen_items(model, np.append(omega, i))
    G = model.item_factors[i] - model.item_factors[others]
    h = model.item_bias[others] - model.item_bias[i]
    return G.reshape(others.size, model.d), h
