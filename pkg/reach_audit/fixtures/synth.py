"""Synthetic ratings with planted low-rank structure and popularity skew."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from reach_audit.config import FIXTURE_DEFAULTS, RATING_HI, RATING_LO
from reach_audit.data.ratings import RatingsTable
from reach_audit.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthSpec:
    n_users: int = int(FIXTURE_DEFAULTS.get("n_users", 300))
    n_items: int = int(FIXTURE_DEFAULTS.get("n_items", 150))
    planted_dim: int = int(FIXTURE_DEFAULTS.get("planted_dim", 4))
    density: float = float(FIXTURE_DEFAULTS.get("density", 0.1))
    noise: float = float(FIXTURE_DEFAULTS.get("noise", 0.1))
    skew: float = float(FIXTURE_DEFAULTS.get("skew", 0.0))
    seed: int = int(FIXTURE_DEFAULTS.get("seed", 0))

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1 or self.planted_dim < 1:
            raise InvalidInputError("n_users, n_items and planted_dim must be >= 1")
        if not 0.0 < self.density <= 1.0:
            raise InvalidInputError(f"density must lie in (0, 1], got {self.density}")
        if self.noise < 0 or self.skew < 0:
            raise InvalidInputError("noise and skew must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class SynthResult:
    table: RatingsTable
    user_factors: np.ndarray  # n x d*
    item_factors: np.ndarray  # m x d*


def item_counts(spec: SynthSpec) -> np.ndarray:
    """Observations per item: weights (i + 1)^-skew scaled to the requested density."""
    weights = (np.arange(spec.n_items) + 1.0) ** (-spec.skew)
    share = np.minimum(1.0, spec.density * spec.n_items * weights / weights.sum())
    return np.maximum(1, np.round(spec.n_users * share)).astype(np.int64)


def generate(spec: SynthSpec) -> SynthResult:
    """Ratings p*^T q* + noise, clipped to the rating interval.

    Factors are sqrt(5 / d*) * U(0, 1) so noiseless ratings already lie in [0, 5].
    Item i is rated by exactly ``item_counts(spec)[i]`` distinct users.
    """
    rng = np.random.default_rng(spec.seed)
    scale = np.sqrt(5.0 / spec.planted_dim)
    P = scale * rng.uniform(0.0, 1.0, size=(spec.n_users, spec.planted_dim))
    Q = scale * rng.uniform(0.0, 1.0, size=(spec.n_items, spec.planted_dim))

    users, items = [], []
    for i, count in enumerate(item_counts(spec)):
        chosen = rng.choice(spec.n_users, size=int(count), replace=False)
        users.append(chosen)
        items.append(np.full(chosen.size, i))
    users = np.concatenate(users)
    items = np.concatenate(items)
    order = np.lexsort((items, users))
    users, items = users[order], items[order]

    ratings = np.einsum("kd,kd->k", P[users], Q[items])
    if spec.noise > 0:
        ratings = ratings + spec.noise * rng.standard_normal(ratings.size)
    ratings = np.clip(ratings, RATING_LO, RATING_HI)

    frame = pd.DataFrame({"user": users.astype(str), "item": items.astype(str), "rating": ratings})
    table = RatingsTable.from_frame(
        frame,
        rating_range=(RATING_LO, RATING_HI),
        user_ids=[str(u) for u in range(spec.n_users)],
        item_ids=[str(i) for i in range(spec.n_items)],
    )
    logger.info(f"Generated {len(table)} ratings for {spec.n_users} users x {spec.n_items} items (seed {spec.seed})")
    return SynthResult(table, P, Q)
