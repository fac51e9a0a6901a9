"""Popularity of available versus unavailable items as empirical CDFs."""

from __future__ import annotations

import logging
from typing import Dict, Mapping, Tuple

import numpy as np
import pandas as pd

from reach_audit.data.ratings import RatingsTable
from reach_audit.errors import InvalidInputError

logger = logging.getLogger(__name__)

MEASURES = ("n_ratings", "mean_rating")
GROUPS = ("available", "unavailable", "all")


def empirical_cdf(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Fraction of ``values`` that are <= each grid point."""
    ordered = np.sort(values)
    return np.searchsorted(ordered, grid, side="right") / ordered.size


def popularity_stats(
    table: RatingsTable,
    flags: Mapping[str, bool],
) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """CDFs of rating count and mean rating for available, unavailable and all items.

    ``flags`` maps every external item id of the audited model to its availability.
    Series are named ``<measure>_<group>_cdf`` and sampled at every observed value of
    the measure; empty groups are skipped. Items without ratings are left out of the
    mean-rating CDFs.
    """
    ids = list(flags)
    if not ids:
        raise InvalidInputError("no availability flags supplied")
    stats = table.item_statistics(ids)
    available = np.array([bool(flags[i]) for i in ids])
    groups = {"available": available, "unavailable": ~available, "all": np.ones(len(ids), dtype=bool)}

    curves: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
    for measure in MEASURES:
        column = stats[measure].to_numpy(dtype=float)
        observed = ~np.isnan(column)
        grid = np.unique(column[observed])
        for group in GROUPS:
            values = column[groups[group] & observed]
            if values.size == 0:
                logger.debug(f"No {group} items with a {measure}; skipping its CDF")
                continue
            curves[f"{measure}_{group}_cdf"] = (grid, empirical_cdf(values, grid))
    return curves


def popularity_table(table: RatingsTable, flags: Mapping[str, bool]) -> pd.DataFrame:
    """Per-item rating count, mean rating and availability flag."""
    stats = table.item_statistics(list(flags))
    return stats.assign(available=[bool(v) for v in flags.values()])
