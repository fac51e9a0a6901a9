import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reach_audit.errors import InvalidInputError
from reach_audit.numerics.linalg import (
    NEG_INF,
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


# ============= RIDGE =============

def test_ridge_identity_no_regularization():
    assert ridge_solve(np.eye(2), [1.0, 2.0], 0.0) == pytest.approx([1.0, 2.0])


def test_ridge_identity_with_regularization():
    p = ridge_solve(np.eye(2), [1.0, 2.0], 1.0)
    assert p == pytest.approx([0.5, 1.0])
    residual = (np.eye(2) + np.eye(2)) @ p - np.array([1.0, 2.0])
    assert np.linalg.norm(residual) <= 1e-10


def test_ridge_rank_deficient_returns_minimum_norm():
    assert ridge_solve([[1.0, 1.0]], [2.0], 0.0) == pytest.approx([1.0, 1.0])


def test_ridge_empty_design_gives_zero():
    p = ridge_solve(np.zeros((0, 3)), [], 0.5)
    assert p.shape == (3,)
    assert not p.any()


@pytest.mark.parametrize("seed", range(10))
def test_ridge_normal_equation_residual(seed):
    rng = np.random.default_rng(seed)
    k, d = rng.integers(1, 12), rng.integers(1, 6)
    X, y = rng.normal(size=(k, d)), rng.normal(size=k)
    lam = float(rng.uniform(0.01, 2.0))
    p = ridge_solve(X, y, lam)
    residual = (X.T @ X + lam * np.eye(d)) @ p - X.T @ y
    assert np.linalg.norm(residual) <= 1e-8 * (1 + np.linalg.norm(y))


def test_ridge_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        ridge_solve([[np.nan]], [1.0], 0.0)
    with pytest.raises(InvalidInputError):
        ridge_solve([[1.0]], [1.0], -1.0)


# ============= SVD / PSEUDOINVERSE =============

def test_pseudoinverse_of_singular_diagonal():
    assert pseudoinverse(np.diag([2.0, 0.0])) == pytest.approx(np.diag([0.5, 0.0]))


def test_pseudoinverse_of_identity():
    assert pseudoinverse(np.eye(3)) == pytest.approx(np.eye(3))


@pytest.mark.parametrize("seed", range(8))
def test_pseudoinverse_penrose_identities(seed):
    rng = np.random.default_rng(seed)
    rows, cols = rng.integers(1, 50, size=2)
    M = rng.normal(size=(rows, cols))
    if seed % 2:
        # rank-deficient variant
        M = M[:, :1] @ rng.normal(size=(1, cols))
    Mp = pseudoinverse(M)
    scale = 1 + np.abs(M).max()
    assert np.abs(M @ Mp @ M - M).max() <= 1e-9 * scale
    assert np.abs(Mp @ M @ Mp - Mp).max() <= 1e-9 * (1 + np.abs(Mp).max())
    assert np.abs((M @ Mp).T - M @ Mp).max() <= 1e-9
    assert np.abs((Mp @ M).T - Mp @ M).max() <= 1e-9


def test_svd_truncates_to_numerical_rank():
    M = np.outer([1.0, 2.0, 3.0], [1.0, -1.0])
    res = svd(M)
    assert res.rank == 1
    assert res.reconstruct() == pytest.approx(M)


def test_pinv_norm_is_inverse_smallest_singular_value():
    assert pinv_norm(np.diag([4.0, 0.5])) == pytest.approx(2.0)
    assert pinv_norm(np.zeros((2, 2))) == 0.0


def test_gram_inverse_matches_inverse():
    X = np.array([[1.0, 2.0], [0.0, 1.0], [3.0, 1.0]])
    assert gram_inverse(X, 0.5) == pytest.approx(np.linalg.inv(X.T @ X + 0.5 * np.eye(2)))


def test_gram_inverse_singular_falls_back_to_pseudoinverse():
    X = np.array([[1.0, 0.0]])
    assert gram_inverse(X, 0.0) == pytest.approx(np.diag([1.0, 0.0]))


# ============= PROJECTIONS =============

def test_project_onto_first_axis():
    x_par, x_perp = project_span([[1.0], [0.0]], [3.0, 4.0])
    assert x_par == pytest.approx([3.0, 0.0])
    assert x_perp == pytest.approx([0.0, 4.0])


def test_project_full_rank_is_identity():
    x_par, x_perp = project_span(np.eye(3), [1.0, -2.0, 0.5])
    assert x_par == pytest.approx([1.0, -2.0, 0.5])
    assert x_perp == pytest.approx(np.zeros(3), abs=1e-12)


def test_project_onto_diagonal():
    x_par, _ = project_span([[1.0], [1.0]], [1.0, 0.0])
    assert x_par == pytest.approx([0.5, 0.5])


def test_projector_is_symmetric_and_idempotent():
    B = np.random.default_rng(3).normal(size=(5, 2))
    P = projector(B)
    assert P == pytest.approx(P.T)
    assert P @ P == pytest.approx(P)
    assert projector(np.zeros((3, 0))) == pytest.approx(np.zeros((3, 3)))


# ============= N-TH LARGEST =============

@pytest.mark.parametrize(
    "values,N,expected",
    [
        ([5, 3, 1], 1, 5),
        ([5, 3, 1], 2, 3),
        ([5, 5, 1], 2, 5),
        ([5], 3, NEG_INF),
        ([], 1, NEG_INF),
    ],
)
def test_nth_largest_examples(values, N, expected):
    assert nth_largest(values, N) == expected


def test_nth_largest_rejects_zero():
    with pytest.raises(InvalidInputError):
        nth_largest([1.0], 0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=30),
    st.integers(min_value=1, max_value=35),
)
def test_nth_largest_matches_sorting(values, N):
    expected = sorted(values, reverse=True)[N - 1] if N <= len(values) else NEG_INF
    assert nth_largest(values, N) == expected
    assert nth_largest(values, N) >= nth_largest(values, N + 1)


@pytest.mark.parametrize("N", [1, 2, 4, 7])
def test_nth_largest_rows_matches_scalar(N):
    S = np.random.default_rng(N).normal(size=(6, 5))
    expected = [nth_largest(row, N) for row in S]
    assert nth_largest_rows(S, N).tolist() == expected
