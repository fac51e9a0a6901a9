"""
Per-user recourse audits.

A user's post-action factor is p = v0 + B a. The screening test places the user at

    p* = Pi_B q_i + (I - Pi_B) v0

(the closest reachable point to q_i when ratings are unbounded) and checks that item
i is in the top N there. The exact top-1 programs work directly on the item region.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence

import numpy as np

from reach_audit.config import DEFAULT_TOLERANCES, RATING_HI, RATING_LO, Tolerances
from reach_audit.data.audit_models import ColdStartEval, DifficultyBound, DifficultyRecord, RecourseRecord
from reach_audit.data.base_models import Averaging, ModMode, ReactionPolicy
from reach_audit.data.model_types import FactorModel, ModificationSet, RatingHistory, UserControl
from reach_audit.errors import InvalidInputError
from reach_audit.model.control import control, mods_history_edits, mods_reactions
from reach_audit.model.preference import item_region, top_n, unseen_items, user_factor
from reach_audit.numerics.linalg import pinv_norm, projector, pseudoinverse, svd
from reach_audit.numerics.lp import LpFeasibility, lp_strict_feasible, min_l1_recourse

from .items import probe_margins
from .parallel import run_parallel

logger = logging.getLogger(__name__)


def _seen(model: FactorModel, omega: Sequence[int]) -> np.ndarray:
    mask = np.zeros(model.m, dtype=bool)
    mask[np.asarray(list(omega), dtype=np.int64)] = True
    return mask


def _check_unseen(model: FactorModel, i: int, seen: np.ndarray) -> int:
    i = model.check_item(i)
    if seen[i]:
        raise InvalidInputError(f"item {i} is already rated; it cannot be a recourse target")
    return i


def probe_point(ctrl: UserControl, q_i: np.ndarray) -> np.ndarray:
    """Pi_B q_i + (I - Pi_B) v0, reached by a_i = B^+ (q_i - v0)."""
    P = projector(ctrl.B)
    return P @ q_i + ctrl.v0 - P @ ctrl.v0


def sufficient_flags(
    model: FactorModel,
    ctrl: UserControl,
    omega: Sequence[int],
    N: int,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
) -> np.ndarray:
    """Sufficient-condition flag for every item (False for seen items)."""
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    seen = _seen(model, omega)
    P = projector(ctrl.B)
    v_perp = ctrl.v0 - P @ ctrl.v0
    Q = model.item_factors
    targets = np.flatnonzero(~seen)
    blocks = [targets[k:k + tolerances.block_size] for k in range(0, targets.size, tolerances.block_size)]
    parts = run_parallel(lambda rows: probe_margins(model, rows, Q[rows] @ P + v_perp, seen, N), blocks, jobs)
    flags = np.zeros(model.m, dtype=bool)
    for rows, margins in zip(blocks, parts):
        flags[rows] = margins > 0
    return flags


def recourse_sufficient(model: FactorModel, ctrl: UserControl, i: int, omega: Sequence[int], N: int) -> bool:
    """True guarantees item i can be pushed into the top N (ratings unbounded)."""
    seen = _seen(model, omega)
    i = _check_unseen(model, i, seen)
    probe = probe_point(ctrl, model.item_factors[i])[None, :]
    return bool(probe_margins(model, np.array([i]), probe, seen, N)[0] > 0)


def alignment_check(model: FactorModel, ctrl: UserControl, i: int, omega: Sequence[int], N: int) -> bool:
    """Is the test point for item i inside its top-N region? Checked by sorting scores."""
    seen = _seen(model, omega)
    i = _check_unseen(model, i, seen)
    scores = model.item_factors @ probe_point(ctrl, model.item_factors[i]) + model.item_bias
    competitors = ~seen
    competitors[i] = False
    return int(np.sum(scores[competitors] >= scores[i])) < N


def modification_set(
    hist: RatingHistory,
    mode: ModMode,
    recommended: Optional[Sequence[int]] = None,
    lo: float = RATING_LO,
    hi: float = RATING_HI,
) -> ModificationSet:
    mode = ModMode(mode)
    if mode is ModMode.HISTORY:
        return mods_history_edits(hist, lo, hi)
    if recommended is None:
        raise InvalidInputError("reaction mode needs a recommended item set")
    return mods_reactions(hist, recommended, lo, hi)


def reaction_set(
    model: FactorModel,
    hist: RatingHistory,
    policy: ReactionPolicy,
    size: int,
    rng: Optional[np.random.Generator] = None,
) -> List[int]:
    """Items a user is shown: the current top ``size`` or a uniform draw of unseen items."""
    policy = ReactionPolicy(policy)
    if policy is ReactionPolicy.TOP:
        return top_n(model, user_factor(model, hist), hist.c_u, hist.omega, size)
    unseen = unseen_items(model, hist.omega)
    rng = rng if rng is not None else np.random.default_rng(0)
    return sorted(rng.choice(unseen, size=min(size, unseen.size), replace=False).tolist())


def user_recourse(
    model: FactorModel,
    hist: RatingHistory,
    mode: ModMode,
    N: int,
    recommended: Optional[Sequence[int]] = None,
    policy: Optional[ReactionPolicy] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    per_item: bool = False,
) -> RecourseRecord:
    """Fraction of unseen items the user provably reaches by changing the allowed ratings."""
    hist.validate_against(model)
    mode = ModMode(mode)
    mods = modification_set(hist, mode, recommended)
    ctrl = control(model, mods, hist.c_u)
    omega = mods.omega
    flags = sufficient_flags(model, ctrl, omega, N, tolerances)
    unseen = unseen_items(model, omega)
    reachable = int(flags[unseen].sum())
    record = RecourseRecord(
        user_id=hist.user_id,
        mode=mode,
        history_len=len(hist),
        n_unseen=int(unseen.size),
        n_reachable=reachable,
        reachable_fraction=reachable / unseen.size if unseen.size else 0.0,
        policy=ReactionPolicy(policy) if policy is not None else None,
        set_size=int(mods.omega_m.size) if mode is ModMode.REACTION else 0,
        per_item={int(i): bool(flags[i]) for i in unseen} if per_item else None,
    )
    logger.debug(f"User {hist.user_id}: {reachable}/{unseen.size} unseen items reachable ({mode.value})")
    return record


def _box_rows(k: int, lo: float, hi: float):
    rows, rhs = [], []
    eye = np.eye(k)
    if np.isfinite(lo):
        rows.append(eye)
        rhs.append(np.full(k, lo))
    if np.isfinite(hi):
        rows.append(-eye)
        rhs.append(np.full(k, -hi))
    if not rows:
        return np.zeros((0, k)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def exact_recourse_top1(
    model: FactorModel,
    ctrl: UserControl,
    i: int,
    omega: Sequence[int],
    lo: float = -np.inf,
    hi: float = np.inf,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> LpFeasibility:
    """Is there an action a in [lo, hi]^k making i the strict top-1 unseen item?

    The witness, when feasible, is the action a.
    """
    if lo > hi:
        raise InvalidInputError(f"rating interval [{lo}, {hi}] is empty")
    G, h = item_region(model, i, omega)
    box, box_rhs = _box_rows(ctrl.k, lo, hi)
    rows = np.vstack([G @ ctrl.B, box])
    rhs = np.concatenate([h - G @ ctrl.v0, box_rhs])
    strict = np.r_[np.ones(G.shape[0], dtype=bool), np.zeros(box.shape[0], dtype=bool)]
    return lp_strict_feasible(rows, rhs, strict=strict, tolerances=tolerances)


def _reference_ratings(model: FactorModel, hist: RatingHistory, mods: ModificationSet, mode: ModMode) -> np.ndarray:
    """Ratings the action cost is measured from: the current ones, or the predicted ones."""
    if mode is ModMode.HISTORY:
        return np.asarray(mods.current, dtype=float)
    p_u = user_factor(model, hist)
    omega_m = mods.omega_m
    return model.mu + model.item_bias[omega_m] + hist.c_u + model.item_factors[omega_m] @ p_u


def difficulty_l1(
    model: FactorModel,
    hist: RatingHistory,
    i: int,
    mode: ModMode,
    lo: float = RATING_LO,
    hi: float = RATING_HI,
    recommended: Optional[Sequence[int]] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> DifficultyRecord:
    """Least l1 change of the allowed ratings that makes item i the top-1 recommendation.

    The cost is measured from the current ratings (history edits) or from the full
    predicted ratings mu + b + c_u + Q_m p_u of the new items (reactions).
    """
    hist.validate_against(model)
    mode = ModMode(mode)
    mods = modification_set(hist, mode, recommended, lo, hi)
    _check_unseen(model, i, _seen(model, mods.omega))
    ctrl = control(model, mods, hist.c_u)
    G, h = item_region(model, i, mods.omega)
    a_hat = _reference_ratings(model, hist, mods, mode)
    result = min_l1_recourse(ctrl.B, ctrl.v0, G, h, a_hat, lo, hi, tolerances=tolerances)
    return DifficultyRecord(
        user_id=hist.user_id,
        item_id=int(i),
        mode=mode,
        feasible=result.feasible,
        exact_cost=result.cost if result.feasible else None,
    )


def difficulty_bound(
    model: FactorModel,
    hist: RatingHistory,
    mode: ModMode,
    N: int = 1,
    recommended: Optional[Sequence[int]] = None,
    averaging: Averaging = Averaging.REACHABLE,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> DifficultyBound:
    """Spectral upper bound on the l2 difficulty of recourse, per item and averaged.

    Per unseen item the bound is ||B^+|| * ||q_i - (p_u + p_b)|| with p_u the user
    factor before any action and p_b the shift the new items' biases cause (zero for
    history edits). Where the test point lies in the item's region its l2 cost from
    the reference ratings is recorded as ``feasible_point_cost``. Ratings are taken
    as unbounded.

    For reactions the reference ratings are the bias-free predictions Q_m p_u, since
    the bias part of the prediction is carried by p_b; v0 + B Q_m p_u = p_u + p_b.
    The costs here are therefore not on the same scale as ``difficulty_l1``, which
    measures change from the full predicted ratings.
    """
    hist.validate_against(model)
    mode = ModMode(mode)
    averaging = Averaging(averaging)
    mods = modification_set(hist, mode, recommended)
    ctrl = control(model, mods, hist.c_u)
    omega = mods.omega
    Q = model.item_factors
    p_u = user_factor(model, hist)

    if mode is ModMode.HISTORY:
        a_hat = np.asarray(mods.current, dtype=float)
        p_b = np.zeros(model.d)
    else:
        omega_m = mods.omega_m
        a_hat = Q[omega_m] @ p_u
        offset = model.item_bias[omega_m] + hist.c_u + model.mu
        p_b = model.bias_sign.multiplier * (ctrl.W @ (Q[omega_m].T @ offset))

    B_pinv = pseudoinverse(ctrl.B)
    norm = pinv_norm(ctrl.B)
    anchor = p_u + p_b
    flags = sufficient_flags(model, ctrl, omega, N, tolerances)
    seen = _seen(model, omega)
    unseen = unseen_items(model, omega)

    records = []
    for i in unseen:
        q_i = Q[i]
        record = DifficultyRecord(
            user_id=hist.user_id,
            item_id=int(i),
            mode=mode,
            bound=float(norm * np.linalg.norm(q_i - anchor)),
            p_b=p_b.tolist(),
        )
        scores = Q @ probe_point(ctrl, q_i) + model.item_bias
        competitors = ~seen
        competitors[i] = False
        record.alignment_holds = int(np.sum(scores[competitors] >= scores[i])) < N
        if record.alignment_holds:
            a_i = B_pinv @ (q_i - ctrl.v0 - ctrl.B @ a_hat) + a_hat
            record.feasible_point_cost = float(np.linalg.norm(a_i - a_hat))
        records.append(record)

    chosen = [r for r in records if averaging is Averaging.ALL or flags[r.item_id]]
    bound_mean = float(np.mean([r.bound for r in chosen])) if chosen else float("nan")
    return DifficultyBound(
        user_id=hist.user_id,
        mode=mode,
        averaging=averaging,
        b_pinv_norm=norm,
        bound_mean=bound_mean,
        n_averaged=len(chosen),
        records=records,
    )


def coldstart_eval(
    model: FactorModel,
    candidate: Sequence[int],
    N: int = 1,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ColdStartEval:
    """Score an onboarding set for a user with no history (v0 = 0).

    ``b_norm_dagger`` is max (s^2 + lambda) / s over the nonzero singular values s of
    Q restricted to the candidate items.
    """
    candidate = [model.check_item(i) for i in candidate]
    if not candidate:
        raise InvalidInputError("onboarding candidate set is empty")
    mods = ModificationSet(np.zeros(0, dtype=np.int64), np.zeros(0), np.asarray(candidate, dtype=np.int64))
    full = control(model, mods, 0.0)
    ctrl = UserControl(B=full.B, v0=np.zeros(model.d), W=full.W)
    flags = sufficient_flags(model, ctrl, candidate, N, tolerances)
    unseen = unseen_items(model, candidate)

    sv = svd(model.item_factors[candidate])
    b_norm = float(np.max((sv.s ** 2 + model.reg) / sv.s)) if sv.rank else 0.0
    return ColdStartEval(
        candidate=list(candidate),
        recourse_count=int(flags[unseen].sum()),
        b_norm_dagger=b_norm,
        rank=sv.rank,
        n_unseen=int(unseen.size),
        per_item={int(i): bool(flags[i]) for i in unseen},
    )
