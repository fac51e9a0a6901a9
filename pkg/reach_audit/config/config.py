"""Audit configuration loader from YAML file with environment overrides."""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

# Load configuration from YAML file
_CONFIG_PATH = Path(os.getenv("REACH_AUDIT_CONFIG", Path(__file__).parent / "audit_config.yaml"))


def _load_config(path: Path = _CONFIG_PATH) -> Dict[str, Any]:
    """Load audit configuration from YAML file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}
    except Exception as e:
        raise RuntimeError(f"Failed to load audit configuration from {path}: {e}")


_config = _load_config()


@dataclass(frozen=True)
class Tolerances:
    """Every numerical tolerance used by the audits, in one place."""

    eps_scale: float = 1e-6
    eps: Optional[float] = None  # fixed eps; None means scale with the constraint rows
    feasibility_tol: float = 1e-9
    certificate_tol: float = 1e-7
    rank_rtol: float = 1e-10
    iteration_factor: int = 50
    block_size: int = 256

    def strict_margin(self, row_norm_max: float) -> float:
        if self.eps is not None:
            return self.eps
        return self.eps_scale * (1.0 + row_norm_max)

    def with_overrides(self, **overrides: Any) -> "Tolerances":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances(
    **{k: v for k, v in _config.get("tolerances", {}).items() if k in Tolerances.__dataclass_fields__}
)

MODEL_DEFAULTS: Dict[str, Any] = _config.get("model", {})
AUDIT_DEFAULTS: Dict[str, Any] = _config.get("audit", {})
RECOURSE_DEFAULTS: Dict[str, Any] = _config.get("recourse", {})
FIXTURE_DEFAULTS: Dict[str, Any] = _config.get("fixtures", {})
TRAINING_DEFAULTS: Dict[str, Any] = _config.get("training", {})

RATING_LO: float = float(MODEL_DEFAULTS.get("rating_lo", 0.0))
RATING_HI: float = float(MODEL_DEFAULTS.get("rating_hi", 5.0))


def get_jobs(cli_value: Optional[int] = None) -> int:
    """Worker count: CLI flag, then REACH_AUDIT_JOBS, then the YAML default."""
    if cli_value is not None:
        return max(1, int(cli_value))
    env_value = os.getenv("REACH_AUDIT_JOBS")
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            logger.warning(f"Ignoring non-integer REACH_AUDIT_JOBS={env_value!r}")
    return max(1, int(AUDIT_DEFAULTS.get("jobs", 1)))


def get_log_level(cli_value: Optional[str] = None) -> str:
    return (cli_value or os.getenv("REACH_AUDIT_LOG_LEVEL") or "WARNING").upper()
