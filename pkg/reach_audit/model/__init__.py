"""The linear preference model and the user control decomposition."""

from .control import affine_control, control, mf_affine_update, mods_history_edits, mods_reactions
from .preference import item_region, predict, predict_all, top_n, unseen_items, user_factor

__all__ = [
    "affine_control",
    "control",
    "item_region",
    "mf_affine_update",
    "mods_history_edits",
    "mods_reactions",
    "predict",
    "predict_all",
    "top_n",
    "unseen_items",
    "user_factor",
]
