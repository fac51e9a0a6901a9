"""
Item availability audits.

An item is aligned-reachable when its own factor, used as a user factor, puts it in
the top N:

    delta_i = ||q_i||^2 + b_i - maxN_{j unseen, j != i} (q_j^T q_i + b_j) > 0

which is a sufficient condition for availability. Exact top-1 availability is an LP
over the item region.
"""

from __future__ import annotations

import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from reach_audit.config import DEFAULT_TOLERANCES, Tolerances
from reach_audit.data.audit_models import ItemAuditRecord, ItemAuditSummary
from reach_audit.data.model_types import FactorModel
from reach_audit.errors import InvalidInputError
from reach_audit.model.preference import item_region, top_n, unseen_items
from reach_audit.numerics.linalg import NEG_INF, as_matrix, nth_largest, nth_largest_rows
from reach_audit.numerics.lp import LpFeasibility, lp_strict_feasible

from .parallel import run_parallel

logger = logging.getLogger(__name__)


def _seen_mask(model: FactorModel, omega: Sequence[int]) -> np.ndarray:
    mask = np.zeros(model.m, dtype=bool)
    mask[np.asarray(list(omega), dtype=np.int64)] = True
    return mask


def aligned_delta(model: FactorModel, i: int, omega: Sequence[int], N: int) -> float:
    i = model.check_item(i)
    seen = _seen_mask(model, omega)
    if seen[i]:
        raise InvalidInputError(f"item {i} is in the observed set")
    Q, b = model.item_factors, model.item_bias
    scores = Q @ Q[i] + b
    competitors = np.flatnonzero(~seen)
    competitors = competitors[competitors != i]
    return float(scores[i] - nth_largest(scores[competitors], N))


def probe_margins(
    model: FactorModel,
    rows: np.ndarray,
    probes: np.ndarray,
    seen: np.ndarray,
    N: int,
    use_bias: bool = True,
) -> np.ndarray:
    """Score of item rows[k] at probes[k] minus the N-th best unseen competitor score there."""
    S = probes @ model.item_factors.T
    if use_bias:
        S = S + model.item_bias[None, :]
    local = np.arange(rows.size)
    own = S[local, rows].copy()
    S[:, seen] = NEG_INF
    S[local, rows] = NEG_INF
    # fewer than N competitors: maxN is -inf
    n_competitors = int((~seen).sum()) - 1
    if n_competitors < N:
        return np.full(rows.size, np.inf)
    return own - nth_largest_rows(S, N)


def _block_deltas(model: FactorModel, rows: np.ndarray, seen: np.ndarray, N: int, use_bias: bool = True) -> np.ndarray:
    return probe_margins(model, rows, model.item_factors[rows], seen, N, use_bias)


def aligned_deltas(
    model: FactorModel,
    N: int,
    omega: Sequence[int] = (),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
    use_bias: bool = True,
) -> np.ndarray:
    """delta_i for every item (NaN for seen items), Gram rows materialized in blocks."""
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    seen = _seen_mask(model, omega)
    targets = np.flatnonzero(~seen)
    blocks = [targets[k:k + tolerances.block_size] for k in range(0, targets.size, tolerances.block_size)]
    parts = run_parallel(lambda rows: _block_deltas(model, rows, seen, N, use_bias), blocks, jobs)
    deltas = np.full(model.m, np.nan)
    for rows, part in zip(blocks, parts):
        deltas[rows] = part
    return deltas


def gram_constraint_report(model: FactorModel, N: int, tolerances: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Slack A_ii - maxN_{j != i} A_ij of the Gram matrix A = Q Q^T, per item."""
    return aligned_deltas(model, N, (), tolerances, use_bias=False)


def item_audit(
    model: FactorModel,
    N: int,
    n_h: int = 0,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
    item_stats: Optional[pd.DataFrame] = None,
    exact: bool = False,
    config: Optional[Dict[str, Any]] = None,
) -> ItemAuditSummary:
    """Aligned-reachability of every item with an empty history and N' = N + n_h.

    ``item_stats`` (indexed by external item id, columns n_ratings and mean_rating)
    fills the popularity fields; ``exact`` adds LP top-1 availability. The exact
    flag answers the N = 1 question for every N', so it only dominates the
    aligned flag when N' = 1; the summary names the N of each flag.
    """
    if N < 1 or n_h < 0:
        raise InvalidInputError(f"need N >= 1 and n_h >= 0, got N={N}, n_h={n_h}")
    n_prime = N + n_h
    deltas = aligned_deltas(model, n_prime, (), tolerances, jobs)
    slack = aligned_deltas(model, n_prime, (), tolerances, jobs, use_bias=False)
    exact_results = exact_item_audit(model, (), tolerances, jobs) if exact else None
    ids = model.external_item_ids

    records: List[ItemAuditRecord] = []
    for i in range(model.m):
        record = ItemAuditRecord(
            item_id=i,
            external_id=ids[i],
            delta=float(deltas[i]),
            aligned_reachable=bool(deltas[i] > 0),
            gram_slack=float(slack[i]),
        )
        if item_stats is not None and ids[i] in item_stats.index:
            row = item_stats.loc[ids[i]]
            record.n_ratings = int(row["n_ratings"])
            record.mean_rating = None if pd.isna(row["mean_rating"]) else float(row["mean_rating"])
        if exact_results is not None:
            result = exact_results[i]
            record.exact_top1_available = result.feasible
            if result.certificate is not None:
                others = unseen_items(model, [i])
                record.certificate = {
                    ids[j]: float(w) for j, w in zip(others, result.certificate) if w > tolerances.feasibility_tol
                }
        records.append(record)

    aligned = sum(r.aligned_reachable for r in records)
    summary = ItemAuditSummary(
        N=N,
        n_h=n_h,
        availability_lower_bound=aligned / model.m,
        records=records,
        exact_availability=(sum(r.feasible for r in exact_results) / model.m) if exact_results is not None else None,
        config=dict(config or {}),
    )
    logger.info(f"Item audit N'={n_prime}: {aligned}/{model.m} items aligned-reachable")
    return summary


def availability_curve(
    model: FactorModel,
    n_values: Iterable[int],
    n_h: int = 0,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
) -> List[Dict[str, Any]]:
    """Aligned-reachable count and fraction for each N in ``n_values``."""
    curve = []
    for N in sorted(set(int(n) for n in n_values)):
        deltas = aligned_deltas(model, N + n_h, (), tolerances, jobs)
        count = int(np.sum(deltas > 0))
        curve.append({"N": N, "n_prime": N + n_h, "aligned_reachable": count, "fraction": count / model.m})
    return curve


def exact_top1_available(
    model: FactorModel,
    i: int,
    omega: Sequence[int] = (),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> LpFeasibility:
    """Top-1 availability of item i: is its (open) item region nonempty?

    Infeasible regions come back with weights w >= 0 on the competitors such that
    sum_j w_j q_j = q_i and sum_j w_j b_j >= b_i (bias domination).
    """
    G, h = item_region(model, i, omega)
    return lp_strict_feasible(G, h, tolerances=tolerances)


def exact_item_audit(
    model: FactorModel,
    omega: Sequence[int] = (),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
) -> List[Optional[LpFeasibility]]:
    """Exact top-1 availability for every item; None for seen items."""
    seen = _seen_mask(model, omega)

    def check(i: int) -> Optional[LpFeasibility]:
        if seen[i]:
            return None
        return exact_top1_available(model, i, omega, tolerances)

    return run_parallel(check, range(model.m), jobs)


def sampled_availability(
    model: FactorModel,
    probes,
    omega: Sequence[int] = (),
    N: int = 1,
) -> float:
    """Fraction of unseen items in the top N at one or more probe points (a lower bound)."""
    P = as_matrix(probes, "probes", cols=model.d)
    if P.shape[0] == 0:
        raise InvalidInputError("need at least one probe")
    unseen = unseen_items(model, omega)
    if unseen.size == 0:
        return 0.0
    hit = np.zeros(model.m, dtype=bool)
    for p in P:
        hit[top_n(model, p, 0.0, omega, N)] = True
    return float(hit[unseen].sum() / unseen.size)
