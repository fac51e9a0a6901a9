"""
Model bundles: a directory holding manifest.json, items.csv and optional users.csv.

Factors are written as decimal text with 17 significant digits, which reads back
bit-exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

import numpy as np
import orjson
import pandas as pd

from reach_audit.errors import BundleFormatError

from .base_models import BiasSign
from .model_types import FactorModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.json"
ITEMS_FILE = "items.csv"
USERS_FILE = "users.csv"
FLOAT_FORMAT = "%.17g"


@dataclass(eq=False)
class ModelBundle:
    model: FactorModel
    extras: Dict[str, Any] = field(default_factory=dict)

    def manifest(self) -> Dict[str, Any]:
        model = self.model
        return {
            "format_version": FORMAT_VERSION,
            "d": model.d,
            "lambda": model.reg,
            "mu": model.mu,
            "bias_sign": model.bias_sign.value,
            "m": model.m,
            "n": model.n,
            "extras": self.extras,
        }


def _write_table(path: Path, id_column: str, ids, bias_column: str, bias: np.ndarray, factors: np.ndarray, prefix: str):
    df = pd.DataFrame({id_column: list(ids), bias_column: bias})
    for k in range(factors.shape[1]):
        df[f"{prefix}{k + 1}"] = factors[:, k]
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def save_bundle(bundle: ModelBundle, path: Path | str) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    model = bundle.model
    manifest = orjson.dumps(bundle.manifest(), option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)
    (path / MANIFEST_FILE).write_bytes(manifest + b"\n")
    _write_table(path / ITEMS_FILE, "item_id", model.external_item_ids, "b", model.item_bias, model.item_factors, "q")
    users_file = path / USERS_FILE
    if model.user_factors is not None:
        user_ids = model.user_ids if model.user_ids is not None else [str(u) for u in range(model.n)]
        _write_table(users_file, "user_id", user_ids, "c", model.user_bias, model.user_factors, "p")
    elif users_file.exists():
        users_file.unlink()
    logger.info(f"Saved model bundle (m={model.m}, d={model.d}, n={model.n}) to {path}")
    return path


def save_model(model: FactorModel, path: Path | str, extras: Dict[str, Any] | None = None) -> Path:
    return save_bundle(ModelBundle(model, dict(extras or {})), path)


def _read_table(path: Path, id_column: str, bias_column: str, prefix: str, d: int):
    try:
        df = pd.read_csv(path, dtype={id_column: str}, float_precision="round_trip", keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise BundleFormatError(f"unreadable table: {e}", path)
    expected = [id_column, bias_column] + [f"{prefix}{k + 1}" for k in range(d)]
    if list(df.columns) != expected:
        raise BundleFormatError(f"columns {list(df.columns)} do not match d={d} (expected {expected})", path)
    try:
        values = df[expected[1:]].to_numpy(dtype=float)
    except ValueError as e:
        raise BundleFormatError(f"non-numeric entry: {e}", path)
    if not np.all(np.isfinite(values)):
        raise BundleFormatError("non-finite entry", path)
    return df[id_column].tolist(), values[:, 0], values[:, 1:]


def load_bundle(path: Path | str) -> ModelBundle:
    path = Path(path)
    manifest_file = path / MANIFEST_FILE
    if not manifest_file.is_file():
        raise BundleFormatError("bundle has no manifest.json", path)
    try:
        manifest = orjson.loads(manifest_file.read_bytes())
    except orjson.JSONDecodeError as e:
        raise BundleFormatError(f"manifest is not valid JSON: {e}", manifest_file)
    missing = {"format_version", "d", "lambda", "mu", "bias_sign", "m", "n"} - set(manifest)
    if missing:
        raise BundleFormatError(f"manifest lacks keys {sorted(missing)}", manifest_file)
    if manifest["format_version"] != FORMAT_VERSION:
        raise BundleFormatError(
            f"unsupported format_version {manifest['format_version']} (expected {FORMAT_VERSION})", manifest_file
        )
    d, m, n = int(manifest["d"]), int(manifest["m"]), int(manifest["n"])
    try:
        bias_sign = BiasSign(manifest["bias_sign"])
    except ValueError:
        raise BundleFormatError(f"unknown bias_sign {manifest['bias_sign']!r}", manifest_file)

    items_file = path / ITEMS_FILE
    if not items_file.is_file():
        raise BundleFormatError("bundle has no items.csv", path)
    item_ids, b, Q = _read_table(items_file, "item_id", "b", "q", d)
    if len(item_ids) != m:
        raise BundleFormatError(f"manifest says m={m} but items.csv has {len(item_ids)} rows", items_file)

    user_ids, c, P = None, None, None
    users_file = path / USERS_FILE
    if n > 0:
        if not users_file.is_file():
            raise BundleFormatError(f"manifest says n={n} but users.csv is missing", path)
        user_ids, c, P = _read_table(users_file, "user_id", "c", "p", d)
        if len(user_ids) != n:
            raise BundleFormatError(f"manifest says n={n} but users.csv has {len(user_ids)} rows", users_file)

    model = FactorModel(
        item_factors=Q,
        item_bias=b,
        mu=float(manifest["mu"]),
        reg=float(manifest["lambda"]),
        bias_sign=bias_sign,
        item_ids=item_ids,
        user_factors=P,
        user_bias=c,
        user_ids=user_ids,
    )
    logger.info(f"Loaded model bundle (m={m}, d={d}, n={n}) from {path}")
    return ModelBundle(model, dict(manifest.get("extras") or {}))


def load_model(path: Path | str) -> FactorModel:
    return load_bundle(path).model
