"""Modification sets and the decomposition p = v0 + B a of the updated user factor."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from reach_audit.config import RATING_HI, RATING_LO
from reach_audit.data.model_types import AffineUpdate, FactorModel, ModificationSet, RatingHistory, UserControl
from reach_audit.errors import InvalidInputError
from reach_audit.numerics.linalg import gram_inverse

logger = logging.getLogger(__name__)


def mods_history_edits(hist: RatingHistory, lo: float = RATING_LO, hi: float = RATING_HI) -> ModificationSet:
    """Every past rating may be changed; nothing is frozen."""
    return ModificationSet(
        omega0=np.zeros(0, dtype=np.int64),
        r0=np.zeros(0),
        omega_m=hist.omega,
        rating_lo=lo,
        rating_hi=hi,
        current=hist.ratings,
    )


def mods_reactions(
    hist: RatingHistory,
    recommended: Sequence[int],
    lo: float = RATING_LO,
    hi: float = RATING_HI,
) -> ModificationSet:
    """History frozen; only the freshly recommended items may be rated."""
    recommended = np.asarray(list(recommended), dtype=np.int64)
    overlap = np.intersect1d(recommended, hist.omega)
    if overlap.size:
        raise InvalidInputError(f"recommended items {overlap.tolist()} are already rated by user {hist.user_id}")
    return ModificationSet(
        omega0=hist.omega,
        r0=hist.ratings,
        omega_m=recommended,
        rating_lo=lo,
        rating_hi=hi,
    )


def _check_items(model: FactorModel, mods: ModificationSet) -> None:
    omega = mods.omega
    if omega.size and omega.max() >= model.m:
        raise InvalidInputError(f"modification set references item >= {model.m}")


def control(model: FactorModel, mods: ModificationSet, c_u: float = 0.0) -> UserControl:
    """W = (Q_O^T Q_O + lambda I)^-1, B = W Q_m^T, v0 = W Q_0^T r0 +/- W Q_O^T (b_O + c_u + mu)."""
    _check_items(model, mods)
    Q = model.item_factors
    omega = mods.omega
    W = gram_inverse(Q[omega].reshape(omega.size, model.d), model.reg)
    B = W @ Q[mods.omega_m].T
    v0 = W @ (Q[mods.omega0].T @ mods.r0)
    if omega.size:
        offset = model.item_bias[omega] + c_u + model.mu
        v0 = v0 + model.bias_sign.multiplier * (W @ (Q[omega].T @ offset))
    return UserControl(B=B.reshape(model.d, mods.omega_m.size), v0=v0, W=W)


def mf_affine_update(model: FactorModel, omega: Sequence[int], c_u: float = 0.0) -> AffineUpdate:
    """The least-squares update for support ``omega`` written as p = A r + dvec."""
    omega = np.asarray(list(omega), dtype=np.int64)
    Q = model.item_factors
    W = gram_inverse(Q[omega].reshape(omega.size, model.d), model.reg)
    A = np.zeros((model.d, model.m))
    A[:, omega] = W @ Q[omega].T
    dvec = np.zeros(model.d)
    if omega.size:
        offset = model.item_bias[omega] + c_u + model.mu
        dvec = model.bias_sign.multiplier * (W @ (Q[omega].T @ offset))
    return AffineUpdate(A=A, dvec=dvec)


def affine_control(update: AffineUpdate, mods: ModificationSet) -> UserControl:
    """B = A[:, omega_m], v0 = A[:, omega0] r0 + dvec for any affine user update."""
    omega = mods.omega
    if omega.size and omega.max() >= update.A.shape[1]:
        raise InvalidInputError(f"update has {update.A.shape[1]} item columns; set references item {omega.max()}")
    A = update.A
    B = A[:, mods.omega_m]
    v0 = A[:, mods.omega0] @ mods.r0 + update.dvec
    return UserControl(B=B, v0=v0)
