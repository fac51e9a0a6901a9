from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from reach_audit.errors import InvalidInputError
from reach_audit.numerics.linalg import as_matrix, as_vector

from .base_models import BiasSign


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def _item_ids(values: Sequence[int], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    if np.unique(arr).size != arr.size:
        raise InvalidInputError(f"{name} has duplicate item ids")
    if arr.size and arr.min() < 0:
        raise InvalidInputError(f"{name} has negative item ids")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Trained linear preference model r_hat = mu + b_i + c_u + p_u^T q_i."""

    item_factors: np.ndarray  # Q, m x d, row i is q_i
    item_bias: np.ndarray     # b, length m
    mu: float = 0.0
    reg: float = 0.0          # lambda
    bias_sign: BiasSign = BiasSign.ADDITIVE
    item_ids: Optional[List[str]] = None
    user_factors: Optional[np.ndarray] = None
    user_bias: Optional[np.ndarray] = None
    user_ids: Optional[List[str]] = None

    def __post_init__(self):
        Q = as_matrix(self.item_factors, "item factors")
        m, d = Q.shape
        if m < 1 or d < 1:
            raise InvalidInputError(f"model needs m >= 1 and d >= 1, got {Q.shape}")
        object.__setattr__(self, "item_factors", _frozen(Q))
        object.__setattr__(self, "item_bias", _frozen(as_vector(self.item_bias, "item bias", size=m)))
        if not np.isfinite(self.mu):
            raise InvalidInputError("global bias must be finite")
        if self.reg < 0 or not np.isfinite(self.reg):
            raise InvalidInputError(f"regularizer must be finite and >= 0, got {self.reg}")
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "reg", float(self.reg))
        object.__setattr__(self, "bias_sign", BiasSign(self.bias_sign))
        if self.item_ids is not None and len(self.item_ids) != m:
            raise InvalidInputError(f"{len(self.item_ids)} item ids for {m} items")
        if self.user_factors is not None:
            P = as_matrix(self.user_factors, "user factors", cols=d)
            object.__setattr__(self, "user_factors", _frozen(P))
            ub = np.zeros(P.shape[0]) if self.user_bias is None else self.user_bias
            object.__setattr__(self, "user_bias", _frozen(as_vector(ub, "user bias", size=P.shape[0])))
            if self.user_ids is not None and len(self.user_ids) != P.shape[0]:
                raise InvalidInputError(f"{len(self.user_ids)} user ids for {P.shape[0]} users")

    @property
    def d(self) -> int:
        return self.item_factors.shape[1]

    @property
    def m(self) -> int:
        return self.item_factors.shape[0]

    @property
    def n(self) -> int:
        return 0 if self.user_factors is None else self.user_factors.shape[0]

    @property
    def external_item_ids(self) -> List[str]:
        return list(self.item_ids) if self.item_ids is not None else [str(i) for i in range(self.m)]

    def check_item(self, i: int) -> int:
        if not 0 <= int(i) < self.m:
            raise InvalidInputError(f"item id {i} out of range for {self.m} items")
        return int(i)

    def subset_items(self, items: Sequence[int]) -> "FactorModel":
        """Model restricted to ``items`` (re-indexed 0..len-1 in the given order)."""
        idx = np.asarray(items, dtype=np.int64)
        ids = self.external_item_ids
        return FactorModel(
            item_factors=self.item_factors[idx],
            item_bias=self.item_bias[idx],
            mu=self.mu,
            reg=self.reg,
            bias_sign=self.bias_sign,
            item_ids=[ids[i] for i in idx],
            user_factors=self.user_factors,
            user_bias=self.user_bias,
            user_ids=self.user_ids,
        )

    def user_bias_for(self, user_id: str) -> float:
        if self.user_ids is None or self.user_bias is None:
            return 0.0
        try:
            return float(self.user_bias[self.user_ids.index(user_id)])
        except ValueError:
            return 0.0


@dataclass(frozen=True, eq=False)
class RatingHistory:
    """One user's observed items (Omega_u), their ratings and user bias."""

    user_id: str
    omega: np.ndarray
    ratings: np.ndarray
    c_u: float = 0.0

    def __post_init__(self):
        omega = _item_ids(self.omega, "history")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "ratings", _frozen(as_vector(self.ratings, "ratings", size=omega.size)))
        object.__setattr__(self, "c_u", float(self.c_u))

    def __len__(self) -> int:
        return int(self.omega.size)

    def validate_against(self, model: FactorModel) -> "RatingHistory":
        if self.omega.size and self.omega.max() >= model.m:
            raise InvalidInputError(f"history of user {self.user_id} references item >= {model.m}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "user_id": self.user_id,
            "omega": self.omega.tolist(),
            "ratings": self.ratings.tolist(),
            "c_u": self.c_u,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RatingHistory":
        return cls(data["user_id"], data["omega"], data["ratings"], data.get("c_u", 0.0))


@dataclass(frozen=True, eq=False)
class ModificationSet:
    """Immutable (omega0, r0), mutable omega_m, and the rating interval."""

    omega0: np.ndarray
    r0: np.ndarray
    omega_m: np.ndarray
    rating_lo: float = 0.0
    rating_hi: float = 5.0
    current: Optional[np.ndarray] = None  # present values of the mutable ratings, if any

    def __post_init__(self):
        omega0 = _item_ids(self.omega0, "immutable set")
        omega_m = _item_ids(self.omega_m, "mutable set")
        if np.intersect1d(omega0, omega_m).size:
            raise InvalidInputError("immutable and mutable item sets overlap")
        if self.rating_lo > self.rating_hi:
            raise InvalidInputError(f"rating interval [{self.rating_lo}, {self.rating_hi}] is empty")
        object.__setattr__(self, "omega0", omega0)
        object.__setattr__(self, "omega_m", omega_m)
        object.__setattr__(self, "r0", _frozen(as_vector(self.r0, "r0", size=omega0.size)))
        if self.current is not None:
            object.__setattr__(self, "current", _frozen(as_vector(self.current, "current", size=omega_m.size)))

    @property
    def omega(self) -> np.ndarray:
        """All observed items, immutable first."""
        return np.concatenate([self.omega0, self.omega_m])


@dataclass(frozen=True, eq=False)
class UserControl:
    """p = v0 + B a: control matrix B (d x |omega_m|), anchor v0, and W."""

    B: np.ndarray
    v0: np.ndarray
    W: Optional[np.ndarray] = None  # only set for the least-squares update

    @property
    def k(self) -> int:
        return self.B.shape[1]

    def latent(self, a) -> np.ndarray:
        return self.v0 + self.B @ np.asarray(a, dtype=float)


@dataclass(frozen=True, eq=False)
class AffineUpdate:
    """General affine user update p = A r + dvec, A is d x m (one column per item)."""

    A: np.ndarray
    dvec: Optional[np.ndarray] = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        object.__setattr__(self, "A", _frozen(A))
        dvec = np.zeros(A.shape[0]) if self.dvec is None else self.dvec
        object.__setattr__(self, "dvec", _frozen(as_vector(dvec, "dvec", size=A.shape[0])))
