"""
Report-generating pipelines behind the command line.

Each ``run_*`` function returns ``(report, curves)``: a JSON-ready report with
``config``/``summary``/``records`` and named plot-data series.
"""

from __future__ import annotations

import logging
from dataclasses import fields
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from reach_audit.config import DEFAULT_TOLERANCES, RATING_HI, RATING_LO, Tolerances
from reach_audit.data.audit_models import ItemAuditRecord, RecourseRecord
from reach_audit.data.base_models import Averaging, ModMode, ReactionPolicy
from reach_audit.data.model_types import FactorModel, RatingHistory
from reach_audit.data.ratings import RatingsTable, filter_top_items, item_index_map, user_histories
from reach_audit.data.reports import build_report
from reach_audit.errors import InvalidInputError

from .items import availability_curve, item_audit
from .parallel import run_parallel
from .popularity import popularity_stats, popularity_table
from .users import coldstart_eval, difficulty_bound, difficulty_l1, reaction_set, user_recourse

logger = logging.getLogger(__name__)

Curves = Dict[str, Tuple[np.ndarray, np.ndarray]]

# CSV headers, written even when a report has no records
ITEM_COLUMNS = [f.name for f in fields(ItemAuditRecord)]
POPULARITY_COLUMNS = ["item", "n_ratings", "mean_rating", "available"]
RECOURSE_COLUMNS = [f.name for f in fields(RecourseRecord)]
DIFFICULTY_COLUMNS = ["user_id", "history_len", "feasible", "exact_cost"]
BOUND_COLUMNS = ["bound_mean", "b_pinv_norm", "n_averaged"]
COLDSTART_COLUMNS = ["item", "reachable"]


def difficulty_columns(averaging: Optional[Averaging]) -> List[str]:
    return DIFFICULTY_COLUMNS + (BOUND_COLUMNS if averaging is not None else [])


def restrict_to_top_items(model: FactorModel, table: RatingsTable, k: Optional[int]) -> Tuple[FactorModel, RatingsTable]:
    """Keep only the k most rated model items (ties by external id) in both the model and the table.

    Model items without ratings never rank among the k.
    """
    if not k or model.m <= k:
        return model, table
    frame = table.frame[table.frame["item"].isin(set(model.external_item_ids))]
    kept = filter_top_items(RatingsTable.from_frame(frame, table.rating_range), k)
    keep = set(kept.item_ids)
    idx = [i for i, item_id in enumerate(model.external_item_ids) if item_id in keep]
    logger.info(f"Restricted audit to the {len(idx)} most rated of {model.m} items")
    return model.subset_items(idx), kept


def sample_users(table: RatingsTable, count: Optional[int], seed: int) -> List[str]:
    """Seeded sample of external user ids, kept in table order."""
    n = table.n_users
    if not count or count >= n:
        return list(table.user_ids)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=count, replace=False))
    return [table.user_ids[k] for k in chosen]


def _user_rng(seed: int, user_id: str, table: RatingsTable) -> np.random.Generator:
    return np.random.default_rng([seed, table.user_ids.index(user_id)])


def _step_cdf(values: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    ordered = np.sort(np.asarray(values, dtype=float))
    return ordered, np.arange(1, ordered.size + 1) / max(ordered.size, 1)


# ============= ITEMS =============

def run_item_audit(
    model: FactorModel,
    N: int,
    n_values: Sequence[int],
    n_h: int = 0,
    exact: bool = False,
    table: Optional[RatingsTable] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
    config: Optional[Mapping[str, Any]] = None,
) -> Tuple[Dict[str, Any], Curves]:
    stats = table.item_statistics(model.external_item_ids) if table is not None else None
    summary = item_audit(model, N, n_h, tolerances, jobs, item_stats=stats, exact=exact, config=dict(config or {}))
    curve = availability_curve(model, sorted(set(n_values) | {N}), n_h, tolerances, jobs)
    head = summary.summary_dict()
    head["curve"] = curve
    report = build_report(config or {}, head, summary.records)
    x = np.array([row["N"] for row in curve], dtype=float)
    curves = {
        "aligned_reachable_vs_N": (x, np.array([row["aligned_reachable"] for row in curve], dtype=float)),
        "availability_vs_N": (x, np.array([row["fraction"] for row in curve], dtype=float)),
    }
    return report, curves


def run_popularity(
    model: FactorModel,
    table: RatingsTable,
    N: int,
    n_h: int = 0,
    exact: bool = False,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
    config: Optional[Mapping[str, Any]] = None,
) -> Tuple[Dict[str, Any], Curves]:
    summary = item_audit(model, N, n_h, tolerances, jobs, exact=exact)
    flags = summary.flags()
    curves = popularity_stats(table, flags)
    per_item = popularity_table(table, flags)
    records = [
        {"item": item, "n_ratings": int(row.n_ratings), "mean_rating": row.mean_rating, "available": bool(row.available)}
        for item, row in per_item.iterrows()
    ]
    available = int(sum(flags.values()))
    head = {
        "N": N,
        "n_h": n_h,
        "exact": exact,
        "flags_at_n": 1 if exact else N + n_h,
        "m": model.m,
        "available": available,
        "unavailable": model.m - available,
        "median_ratings_available": _median(per_item, True, "n_ratings"),
        "median_ratings_unavailable": _median(per_item, False, "n_ratings"),
    }
    return build_report(config or {}, head, records), curves


def _median(frame, available: bool, column: str) -> Optional[float]:
    values = frame.loc[frame["available"] == available, column].dropna()
    return float(values.median()) if len(values) else None


# ============= USERS =============

def _histories(model: FactorModel, table: RatingsTable, users: Optional[int], seed: int) -> List[RatingHistory]:
    chosen = sample_users(table, users, seed)
    return user_histories(table, model, chosen)


def _recommended(
    model: FactorModel,
    hist: RatingHistory,
    policy: ReactionPolicy,
    size: int,
    rng: np.random.Generator,
    exclude: Optional[int] = None,
) -> List[int]:
    if exclude is None:
        return reaction_set(model, hist, policy, size, rng)
    picked = reaction_set(model, hist, policy, size + 1, rng)
    return [j for j in picked if j != exclude][:size]


def run_recourse(
    model: FactorModel,
    table: RatingsTable,
    mode: ModMode,
    policies: Sequence[ReactionPolicy],
    set_size: int,
    N: int,
    users: Optional[int],
    seed: int,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
    config: Optional[Mapping[str, Any]] = None,
) -> Tuple[Dict[str, Any], Curves]:
    """Amount of recourse per sampled user: one row per user (and policy in reaction mode)."""
    mode = ModMode(mode)
    histories = _histories(model, table, users, seed)
    policies = [ReactionPolicy(p) for p in policies] if mode is ModMode.REACTION else [None]

    def audit(hist: RatingHistory):
        rows = []
        for policy in policies:
            recommended = None
            if policy is not None:
                recommended = _recommended(model, hist, policy, set_size, _user_rng(seed, hist.user_id, table))
            rows.append(user_recourse(model, hist, mode, N, recommended, policy, tolerances))
        return rows

    per_user = run_parallel(audit, histories, jobs, desc="recourse")
    records = [record for rows in per_user for record in rows]

    curves: Curves = {}
    # the sufficient screen is unconstrained, so rating bounds do not apply here
    summary: Dict[str, Any] = {"mode": mode.value, "N": N, "n_users": len(histories), "unbounded_ratings": True}
    for policy in policies:
        label = mode.value if policy is None else f"{mode.value}_{policy.value}"
        chosen = [r for r in records if r.policy == policy]
        order = sorted(chosen, key=lambda r: (r.history_len, r.user_id))
        curves[f"fraction_vs_history_{label}"] = (
            np.array([r.history_len for r in order], dtype=float),
            np.array([r.reachable_fraction for r in order], dtype=float),
        )
        summary[f"mean_fraction_{label}"] = float(np.mean([r.reachable_fraction for r in chosen])) if chosen else None
    return build_report(config or {}, summary, records), curves


def run_difficulty(
    model: FactorModel,
    table: RatingsTable,
    item: str,
    mode: ModMode,
    policy: ReactionPolicy,
    set_size: int,
    users: Optional[int],
    seed: int,
    lo: float = RATING_LO,
    hi: float = RATING_HI,
    averaging: Optional[Averaging] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
    config: Optional[Mapping[str, Any]] = None,
) -> Tuple[Dict[str, Any], Curves]:
    """l1 difficulty of making ``item`` the top-1 recommendation, per sampled user.

    With ``averaging`` set, each row also carries the user's spectral bound.
    """
    mode = ModMode(mode)
    index = item_index_map(model)
    if item not in index:
        raise InvalidInputError(f"target item {item!r} is not in the model")
    target = index[item]
    histories = _histories(model, table, users, seed)

    def audit(hist: RatingHistory) -> Optional[Dict[str, Any]]:
        if target in set(hist.omega.tolist()):
            logger.debug(f"User {hist.user_id} already rated {item}; skipped")
            return None
        recommended = None
        if mode is ModMode.REACTION:
            rng = _user_rng(seed, hist.user_id, table)
            recommended = _recommended(model, hist, policy, set_size, rng, exclude=target)
        record = difficulty_l1(model, hist, target, mode, lo, hi, recommended, tolerances)
        row = {
            "user_id": hist.user_id,
            "history_len": len(hist),
            "feasible": record.feasible,
            "exact_cost": record.exact_cost,
        }
        if averaging is not None:
            bound = difficulty_bound(model, hist, mode, 1, recommended, averaging, tolerances)
            row["bound_mean"] = bound.bound_mean
            row["b_pinv_norm"] = bound.b_pinv_norm
            row["n_averaged"] = bound.n_averaged
        return row

    rows = [r for r in run_parallel(audit, histories, jobs, desc="difficulty") if r is not None]
    costs = [r["exact_cost"] for r in rows if r["feasible"]]
    summary = {
        "item": item,
        "mode": mode.value,
        "policy": policy.value if mode is ModMode.REACTION else None,
        "n_users": len(rows),
        "n_skipped": len(histories) - len(rows),
        "n_feasible": len(costs),
        "n_infeasible": len(rows) - len(costs),
        "mean_cost": float(np.mean(costs)) if costs else None,
        "median_cost": float(np.median(costs)) if costs else None,
    }
    return build_report(config or {}, summary, rows), {"exact_cost_cdf": _step_cdf(costs)}


def run_coldstart(
    model: FactorModel,
    candidate: Sequence[str],
    N: int,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    config: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    index = item_index_map(model)
    unknown = [c for c in candidate if c not in index]
    if unknown:
        raise InvalidInputError(f"candidate items {unknown} are not in the model")
    result = coldstart_eval(model, [index[c] for c in candidate], N, tolerances)
    ids = model.external_item_ids
    summary = result.to_dict()
    summary.pop("per_item")
    summary["candidate"] = list(candidate)
    records = [{"item": ids[i], "reachable": flag} for i, flag in result.per_item.items()]
    return build_report(config or {}, summary, records)
