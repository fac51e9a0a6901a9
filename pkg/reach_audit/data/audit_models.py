from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from .base_models import Averaging, ModMode, ReactionPolicy


@dataclass
class ItemAuditRecord:
    item_id: int
    external_id: str
    delta: float
    aligned_reachable: bool
    exact_top1_available: Optional[bool] = None
    n_ratings: int = 0
    mean_rating: Optional[float] = None
    gram_slack: Optional[float] = None
    certificate: Optional[Dict[str, float]] = None  # external id -> weight, unavailable items only

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ItemAuditRecord":
        return cls(**data)


@dataclass
class ItemAuditSummary:
    N: int
    n_h: int
    availability_lower_bound: float
    records: List[ItemAuditRecord]
    exact_availability: Optional[float] = None
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_prime(self) -> int:
        return self.N + self.n_h

    @property
    def aligned_count(self) -> int:
        return sum(r.aligned_reachable for r in self.records)

    def flags(self) -> Dict[str, bool]:
        """Availability per external item id (exact flag when computed)."""
        return {
            r.external_id: r.exact_top1_available if r.exact_top1_available is not None else r.aligned_reachable
            for r in self.records
        }

    def summary_dict(self) -> Dict[str, Any]:
        # aligned flags are taken at N', exact flags always at top-1
        return {
            "N": self.N,
            "n_h": self.n_h,
            "n_prime": self.n_prime,
            "m": len(self.records),
            "aligned_reachable": self.aligned_count,
            "aligned_at_n": self.n_prime,
            "availability_lower_bound": self.availability_lower_bound,
            "exact_availability": self.exact_availability,
            "exact_at_n": 1 if self.exact_availability is not None else None,
        }

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        return {
            "config": self.config,
            "summary": self.summary_dict(),
            "records": [r.to_dict() for r in self.records],
        }


@dataclass
class RecourseRecord:
    user_id: str
    mode: ModMode
    history_len: int
    n_unseen: int
    n_reachable: int
    reachable_fraction: float
    policy: Optional[ReactionPolicy] = None
    set_size: int = 0
    per_item: Optional[Dict[int, bool]] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        data = asdict(self)
        data["mode"] = self.mode.value if hasattr(self.mode, "value") else self.mode
        data["policy"] = (self.policy.value if hasattr(self.policy, "value") else self.policy) if self.policy else None
        if self.per_item is not None:
            data["per_item"] = {str(k): v for k, v in self.per_item.items()}
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RecourseRecord":
        data = data.copy()
        data["mode"] = ModMode(data["mode"])
        data["policy"] = ReactionPolicy(data["policy"]) if data.get("policy") else None
        if data.get("per_item") is not None:
            data["per_item"] = {int(k): v for k, v in data["per_item"].items()}
        return cls(**data)


@dataclass
class DifficultyRecord:
    user_id: str
    item_id: int
    mode: ModMode
    feasible: Optional[bool] = None           # exact l1 program outcome when solved
    exact_cost: Optional[float] = None        # l1
    feasible_point_cost: Optional[float] = None  # l2 at the projected test point
    bound: Optional[float] = None
    alignment_holds: bool = False
    p_b: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        data = asdict(self)
        data["mode"] = self.mode.value if hasattr(self.mode, "value") else self.mode
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DifficultyRecord":
        data = data.copy()
        data["mode"] = ModMode(data["mode"])
        return cls(**data)


@dataclass
class DifficultyBound:
    """Per-user aggregate of the spectral difficulty bound."""

    user_id: str
    mode: ModMode
    averaging: Averaging
    b_pinv_norm: float
    bound_mean: float          # NaN when the averaging set is empty
    n_averaged: int
    records: List[DifficultyRecord]
    unbounded_ratings: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "user_id": self.user_id,
            "mode": self.mode.value,
            "averaging": self.averaging.value,
            "b_pinv_norm": self.b_pinv_norm,
            "bound_mean": self.bound_mean,
            "n_averaged": self.n_averaged,
            "unbounded_ratings": self.unbounded_ratings,
            "records": [r.to_dict() for r in self.records],
        }


@dataclass
class ColdStartEval:
    candidate: List[int]
    recourse_count: int
    b_norm_dagger: float
    rank: int
    n_unseen: int
    per_item: Dict[int, bool] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        data = asdict(self)
        data["per_item"] = {str(k): v for k, v in self.per_item.items()}
        return data
