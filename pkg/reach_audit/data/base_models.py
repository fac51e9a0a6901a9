from enum import Enum


class BiasSign(Enum):
    """How bias terms enter the least-squares user update."""
    ADDITIVE = "additive"            # p = W Q^T (r + b + c + mu)
    RESIDUAL = "residual"            # p = W Q^T (r - b - c - mu)

    @property
    def multiplier(self) -> float:
        return 1.0 if self is BiasSign.ADDITIVE else -1.0


class ModMode(Enum):
    """Modification-set modes: which ratings a user may change"""
    HISTORY = "history"    # re-rate every past item
    REACTION = "reaction"  # rate a fresh batch, history frozen


class ReactionPolicy(Enum):
    RANDOM = "random"
    TOP = "top"


class Averaging(Enum):
    """Denominator of the difficulty bound average"""
    REACHABLE = "reachable"
    ALL = "all"


class LpStatus(Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


class SimplexStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class RatingFormat(Enum):
    MLENS = "mlens"  # user::item::rating[::timestamp]
    TSV = "tsv"
    CSV = "csv"


class ReportFormat(Enum):
    JSON = "json"
    CSV = "csv"
