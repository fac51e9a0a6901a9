"""
Report and plot-data writers.

JSON reports have three top-level keys: ``config``, ``summary`` and ``records``.
Writers are deterministic: field order follows insertion order and floats are
printed with full precision, so identical runs give identical bytes.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import orjson
import pandas as pd

from reach_audit.errors import InvalidInputError

from .base_models import ReportFormat

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS
FLOAT_FORMAT = "%.17g"

Curve = Tuple[Sequence[float], Sequence[float]]


def build_report(config: Mapping[str, Any], summary: Mapping[str, Any], records: Sequence[Any]) -> Dict[str, Any]:
    return {
        "config": dict(config),
        "summary": dict(summary),
        "records": [r.to_dict() if hasattr(r, "to_dict") else dict(r) for r in records],
    }


def _flatten(record: Mapping[str, Any]) -> Dict[str, Any]:
    flat = {}
    for key, value in record.items():
        if isinstance(value, (list, dict, tuple, np.ndarray)):
            flat[key] = orjson.dumps(value, option=orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS).decode()
        elif hasattr(value, "value"):
            flat[key] = value.value
        else:
            flat[key] = value
    return flat


def write_report(
    report: Mapping[str, Any],
    path: Path | str,
    fmt: ReportFormat | str = ReportFormat.JSON,
    columns: Optional[List[str]] = None,
) -> Path:
    """Write ``report`` as indented JSON, or its records as CSV.

    NaN becomes ``null`` in JSON and an empty cell in CSV. ``columns`` fixes the
    CSV header and is required when there are no records.
    """
    path = Path(path)
    fmt = ReportFormat(fmt)
    rows = [_flatten(r) for r in report.get("records", [])]
    if fmt is ReportFormat.CSV and not rows and columns is None:
        raise InvalidInputError("a CSV report without records needs its column list")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt is ReportFormat.JSON:
        path.write_bytes(orjson.dumps(dict(report), option=JSON_OPTIONS) + b"\n")
    else:
        df = pd.DataFrame(rows, columns=columns if columns is not None else list(rows[0]))
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {fmt.value} report with {len(report.get('records', []))} records to {path}")
    return path


def read_report(path: Path | str) -> Dict[str, Any]:
    return orjson.loads(Path(path).read_bytes())


def validate_curves(curves: Mapping[str, Curve]) -> None:
    for name, (x, y) in curves.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise InvalidInputError(f"series {name!r} has mismatched x/y shapes {x.shape} and {y.shape}")
        if name.endswith("cdf") and y.size and np.any(np.diff(y) < 0):
            raise InvalidInputError(f"series {name!r} is a CDF but decreases")


def emit_plotdata(curves: Mapping[str, Curve], path: Path | str) -> Path:
    """Long-format CSV with columns series, x, y; one row per point."""
    validate_curves(curves)
    frames = [
        pd.DataFrame({"series": name, "x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float)})
        for name, (x, y) in curves.items()
    ]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["series", "x", "y"])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(df)} plot points in {len(frames)} series to {path}")
    return path


def read_plotdata(path: Path | str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
