"""Dense linear algebra and small-LP kernels."""

from .linalg import (
    NEG_INF,
    SvdResult,
    as_matrix,
    as_vector,
    gram_inverse,
    nth_largest,
    nth_largest_rows,
    pinv_norm,
    project_span,
    projector,
    pseudoinverse,
    ridge_solve,
    svd,
)
from .lp import L1Recourse, LpFeasibility, default_eps, lp_strict_feasible, min_l1_recourse
from .simplex import SimplexResult, solve_standard_form

__all__ = [
    "NEG_INF",
    "L1Recourse",
    "LpFeasibility",
    "SimplexResult",
    "SvdResult",
    "as_matrix",
    "as_vector",
    "default_eps",
    "gram_inverse",
    "lp_strict_feasible",
    "min_l1_recourse",
    "nth_largest",
    "nth_largest_rows",
    "pinv_norm",
    "project_span",
    "projector",
    "pseudoinverse",
    "ridge_solve",
    "solve_standard_form",
    "svd",
]
