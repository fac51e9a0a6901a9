"""
Ratings tables: streaming parsers, dataset transforms and per-user histories.

External user and item ids are kept as strings; dense indices are assigned by
first occurrence so the mapping never depends on sorting the input.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from reach_audit.config import RATING_HI, RATING_LO
from reach_audit.errors import DataParseError, InvalidInputError, RangeViolationError

from .base_models import RatingFormat
from .model_types import FactorModel, RatingHistory

logger = logging.getLogger(__name__)

COLUMNS = ["user", "item", "rating", "timestamp"]

# Accepted CSV header names per column
HEADER_ALIASES: Dict[str, Tuple[str, ...]] = {
    "user": ("user", "user_id", "userid", "userId"),
    "item": ("item", "item_id", "itemid", "itemId", "movieId", "movie_id", "artist", "artist_id", "artistID"),
    "rating": ("rating", "score", "value", "weight", "plays", "listens"),
    "timestamp": ("timestamp", "ts", "time"),
}


@dataclass(eq=False)
class RatingsTable:
    """(user, item, rating[, timestamp]) rows plus dense index maps."""

    frame: pd.DataFrame           # columns user, item, rating, timestamp, user_idx, item_idx
    user_ids: List[str]
    item_ids: List[str]
    rating_range: Optional[Tuple[float, float]] = (RATING_LO, RATING_HI)

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        rating_range: Optional[Tuple[float, float]] = (RATING_LO, RATING_HI),
        user_ids: Optional[Sequence[str]] = None,
        item_ids: Optional[Sequence[str]] = None,
    ) -> "RatingsTable":
        """Build a table from user/item/rating columns, assigning first-occurrence indices."""
        df = pd.DataFrame({
            "user": frame["user"].astype(str).to_numpy(),
            "item": frame["item"].astype(str).to_numpy(),
            "rating": frame["rating"].astype(float).to_numpy(),
            "timestamp": frame["timestamp"].to_numpy() if "timestamp" in frame else None,
        })
        if user_ids is None:
            codes, uniques = pd.factorize(df["user"], sort=False)
            user_ids = list(uniques)
            df["user_idx"] = codes
        else:
            user_ids = list(user_ids)
            df["user_idx"] = _lookup(df["user"], user_ids, "user")
        if item_ids is None:
            codes, uniques = pd.factorize(df["item"], sort=False)
            item_ids = list(uniques)
            df["item_idx"] = codes
        else:
            item_ids = list(item_ids)
            df["item_idx"] = _lookup(df["item"], item_ids, "item")
        df["user_idx"] = df["user_idx"].astype(np.int64)
        df["item_idx"] = df["item_idx"].astype(np.int64)
        return cls(df.reset_index(drop=True), user_ids, item_ids, rating_range)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def dense_matrix(self) -> np.ndarray:
        """n_users x n_items array, NaN where unobserved."""
        R = np.full((self.n_users, self.n_items), np.nan)
        R[self.frame["user_idx"].to_numpy(), self.frame["item_idx"].to_numpy()] = self.frame["rating"].to_numpy()
        return R

    def item_statistics(self, item_ids: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """Rating count and mean per external item id (mean is NaN when unrated)."""
        grouped = self.frame.groupby("item", sort=False)["rating"].agg(["count", "mean"])
        ids = list(item_ids) if item_ids is not None else self.item_ids
        stats = grouped.reindex(ids)
        return pd.DataFrame(
            {"n_ratings": stats["count"].fillna(0).astype(np.int64).to_numpy(), "mean_rating": stats["mean"].to_numpy()},
            index=pd.Index(ids, name="item"),
        )


def _lookup(values: pd.Series, ids: Sequence[str], kind: str) -> np.ndarray:
    index = {v: k for k, v in enumerate(ids)}
    codes = values.map(index)
    if codes.isna().any():
        missing = values[codes.isna()].iloc[0]
        raise InvalidInputError(f"{kind} id {missing!r} missing from the supplied id map")
    return codes.to_numpy()


# ============= PARSING =============

def _split_delimited(path: Path, separator: str) -> Iterator[Tuple[int, List[str]]]:
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            yield line_no, line.split(separator)


def _split_csv(path: Path) -> Iterator[Tuple[int, List[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            return
        positions = {}
        for column, aliases in HEADER_ALIASES.items():
            for pos, name in enumerate(header):
                if name.strip() in aliases:
                    positions[column] = pos
                    break
        for column in ("user", "item", "rating"):
            if column not in positions:
                raise DataParseError(f"csv header lacks a '{column}' column (got {header})", path, 1)
        order = [positions[c] for c in COLUMNS if c in positions]
        for row in reader:
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataParseError(f"expected {len(header)} fields, got {len(row)}", path, reader.line_num)
            yield reader.line_num, [row[pos] for pos in order]


def parse_ratings(
    path: Path | str,
    fmt: RatingFormat | str = RatingFormat.MLENS,
    rating_range: Optional[Tuple[float, float]] = (RATING_LO, RATING_HI),
) -> RatingsTable:
    """Stream a ratings file into a ``RatingsTable``.

    ``mlens`` lines are ``user::item::rating[::timestamp]``; ``tsv`` is the same
    with tabs; ``csv`` needs a header naming the columns. Pass ``rating_range=None``
    for unbounded values such as listen counts.
    """
    path = Path(path)
    fmt = RatingFormat(fmt)
    if not path.is_file():
        raise DataParseError("ratings file not found", path)
    if fmt is RatingFormat.CSV:
        rows = _split_csv(path)
    else:
        rows = _split_delimited(path, "::" if fmt is RatingFormat.MLENS else "\t")

    users: List[str] = []
    items: List[str] = []
    ratings: List[float] = []
    stamps: List[Optional[str]] = []
    for line_no, fields in rows:
        if len(fields) not in (3, 4):
            raise DataParseError(f"expected 3 or 4 fields, got {len(fields)}", path, line_no)
        user, item, raw = (f.strip() for f in fields[:3])
        if not user or not item:
            raise DataParseError("empty user or item id", path, line_no)
        try:
            value = float(raw)
        except ValueError:
            raise DataParseError(f"rating {raw!r} is not a number", path, line_no)
        if not np.isfinite(value):
            raise DataParseError(f"rating {raw!r} is not finite", path, line_no)
        if rating_range is not None and not rating_range[0] <= value <= rating_range[1]:
            raise RangeViolationError(
                f"rating {value:g} outside declared range [{rating_range[0]:g}, {rating_range[1]:g}]", path, line_no
            )
        users.append(user)
        items.append(item)
        ratings.append(value)
        stamps.append(fields[3].strip() if len(fields) == 4 else None)

    frame = pd.DataFrame({"user": users, "item": items, "rating": ratings, "timestamp": stamps})
    table = RatingsTable.from_frame(frame, rating_range)
    logger.info(f"Parsed {len(table)} ratings ({table.n_users} users, {table.n_items} items) from {path}")
    return table


def write_ratings(table: RatingsTable, path: Path | str, fmt: RatingFormat | str = RatingFormat.CSV) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = RatingFormat(fmt)
    df = table.frame[["user", "item", "rating"]]
    if fmt is RatingFormat.CSV:
        df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    else:
        sep = "::" if fmt is RatingFormat.MLENS else "\t"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for user, item, rating in df.itertuples(index=False):
                f.write(f"{user}{sep}{item}{sep}{rating:.17g}\n")
    return path


# ============= TRANSFORMS =============

def log1p_transform(table: RatingsTable) -> RatingsTable:
    """Replace every value x by log(1 + x); counts must be nonnegative."""
    values = table.frame["rating"].to_numpy()
    if (values < 0).any():
        raise InvalidInputError("log1p transform needs nonnegative counts")
    frame = table.frame.copy()
    frame["rating"] = np.log1p(values)
    hi = float(frame["rating"].max()) if len(frame) else 0.0
    return RatingsTable(frame, list(table.user_ids), list(table.item_ids), (0.0, hi))


def aggregate_listens(table: RatingsTable, min_total: float = 50) -> RatingsTable:
    """Sum repeated (user, item) counts and drop items with fewer than ``min_total`` listens overall."""
    summed = table.frame.groupby(["user", "item"], sort=False, as_index=False)["rating"].sum()
    totals = summed.groupby("item", sort=False)["rating"].transform("sum")
    kept = summed[totals >= min_total]
    logger.info(f"Kept {kept['item'].nunique()} of {summed['item'].nunique()} items with >= {min_total} listens")
    return RatingsTable.from_frame(kept, rating_range=None)


def filter_top_items(table: RatingsTable, k: int) -> RatingsTable:
    """Keep the ``k`` most rated items; ties go to the smaller external id."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    counts = table.frame.groupby("item", sort=False).size().rename("count").reset_index()
    counts = counts.sort_values(["count", "item"], ascending=[False, True], kind="mergesort")
    keep = set(counts["item"].iloc[:k])
    frame = table.frame[table.frame["item"].isin(keep)]
    return RatingsTable.from_frame(frame, table.rating_range)


def train_test_split(table: RatingsTable, test_fraction: float = 0.1, seed: int = 0) -> Tuple[RatingsTable, RatingsTable]:
    """Random global split; both parts keep the full id maps of ``table``."""
    if not 0.0 <= test_fraction < 1.0:
        raise InvalidInputError(f"test fraction must lie in [0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    n = len(table)
    is_test = np.zeros(n, dtype=bool)
    is_test[rng.permutation(n)[: int(round(test_fraction * n))]] = True
    parts = []
    for mask in (~is_test, is_test):
        frame = table.frame[mask].reset_index(drop=True)
        parts.append(RatingsTable(frame, list(table.user_ids), list(table.item_ids), table.rating_range))
    return parts[0], parts[1]


def rating_distribution(table: RatingsTable) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Histogram of rating values as a plot-data series."""
    values, counts = np.unique(table.frame["rating"].to_numpy(), return_counts=True)
    return {"rating_count": (values, counts.astype(float))}


# ============= HISTORIES =============

def item_index_map(model: FactorModel) -> Dict[str, int]:
    return {item_id: idx for idx, item_id in enumerate(model.external_item_ids)}


def user_histories(
    table: RatingsTable,
    model: FactorModel,
    users: Optional[Sequence[str]] = None,
) -> List[RatingHistory]:
    """Per-user histories indexed by the model's items; ratings of unknown items are dropped."""
    index = item_index_map(model)
    frame = table.frame.assign(model_idx=table.frame["item"].map(index))
    dropped = int(frame["model_idx"].isna().sum())
    if dropped:
        logger.debug(f"Dropped {dropped} ratings of items absent from the model")
    frame = frame.dropna(subset=["model_idx"])
    grouped = {user: group for user, group in frame.groupby("user", sort=False)}
    wanted = list(users) if users is not None else table.user_ids
    histories = []
    for user in wanted:
        group = grouped.get(user)
        if group is None:
            omega, ratings = np.zeros(0, dtype=np.int64), np.zeros(0)
        else:
            # a repeated (user, item) keeps its last rating
            group = group.drop_duplicates("model_idx", keep="last")
            omega = group["model_idx"].to_numpy(dtype=np.int64)
            ratings = group["rating"].to_numpy(dtype=float)
        histories.append(RatingHistory(user, omega, ratings, model.user_bias_for(user)))
    return histories
