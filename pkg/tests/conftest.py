import numpy as np
import pytest

from reach_audit.data.base_models import BiasSign
from reach_audit.data.model_types import FactorModel


def make_model(Q, b=None, mu=0.0, reg=0.0, bias_sign=BiasSign.ADDITIVE, **kwargs) -> FactorModel:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    b = np.zeros(Q.shape[0]) if b is None else np.asarray(b, dtype=float)
    return FactorModel(item_factors=Q, item_bias=b, mu=mu, reg=reg, bias_sign=bias_sign, **kwargs)


def random_model(seed: int, m: int, d: int, bias_scale: float = 0.0, reg: float = 0.1) -> FactorModel:
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(m, d))
    b = bias_scale * rng.normal(size=m)
    return make_model(Q, b, reg=reg)


@pytest.fixture
def midpoint_model():
    """Two unit items and their midpoint: the midpoint is never the strict top-1."""
    return make_model([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])


@pytest.fixture
def orthonormal_model():
    return make_model(np.eye(4))
