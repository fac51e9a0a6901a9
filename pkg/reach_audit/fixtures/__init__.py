"""Desk-scale fixtures: synthetic ratings and a small ALS trainer."""

from .als import TrainConfig, TrainResult, als_train, rmse
from .synth import SynthResult, SynthSpec, generate, item_counts

__all__ = [
    "SynthResult",
    "SynthSpec",
    "TrainConfig",
    "TrainResult",
    "als_train",
    "generate",
    "item_counts",
    "rmse",
]
