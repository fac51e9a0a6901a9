"""Configuration for the reachability audits."""

from .config import (
    AUDIT_DEFAULTS,
    DEFAULT_TOLERANCES,
    FIXTURE_DEFAULTS,
    MODEL_DEFAULTS,
    RATING_HI,
    RATING_LO,
    RECOURSE_DEFAULTS,
    TRAINING_DEFAULTS,
    Tolerances,
    get_jobs,
    get_log_level,
)

__all__ = [
    "AUDIT_DEFAULTS",
    "DEFAULT_TOLERANCES",
    "FIXTURE_DEFAULTS",
    "MODEL_DEFAULTS",
    "RATING_HI",
    "RATING_LO",
    "RECOURSE_DEFAULTS",
    "TRAINING_DEFAULTS",
    "Tolerances",
    "get_jobs",
    "get_log_level",
]
