import numpy as np
import pytest

from reach_audit.audits.items import aligned_deltas, exact_top1_available, probe_margins
from reach_audit.audits.users import (
    alignment_check,
    coldstart_eval,
    difficulty_bound,
    difficulty_l1,
    exact_recourse_top1,
    probe_point,
    reaction_set,
    recourse_sufficient,
    sufficient_flags,
    user_recourse,
)
from reach_audit.data.base_models import Averaging, ModMode, ReactionPolicy
from reach_audit.data.model_types import RatingHistory, UserControl
from reach_audit.errors import InvalidInputError
from reach_audit.model import control, item_region, mods_history_edits, mods_reactions, top_n, user_factor
from reach_audit.numerics.linalg import pseudoinverse
from reach_audit.numerics.lp import default_eps

from .conftest import make_model, random_model


def circle_model(m: int, **kwargs):
    angles = 2 * np.pi * np.arange(m) / m
    return make_model(np.column_stack([np.cos(angles), np.sin(angles)]), **kwargs)


# ============= SUFFICIENT CONDITION =============

def test_control_on_first_axis():
    model = make_model(np.eye(2))
    ctrl = UserControl(B=np.array([[1.0], [0.0]]), v0=np.zeros(2))
    assert recourse_sufficient(model, ctrl, 0, [], 1)
    assert not recourse_sufficient(model, ctrl, 1, [], 1)


def test_no_control_means_current_top_n():
    model = make_model([[1.0, 0.0], [0.0, 1.0], [0.6, 0.6]])
    ctrl = UserControl(B=np.zeros((2, 0)), v0=np.array([2.0, 1.0]))
    assert [recourse_sufficient(model, ctrl, i, [], 1) for i in range(3)] == [True, False, False]
    assert [recourse_sufficient(model, ctrl, i, [], 2) for i in range(3)] == [True, False, True]


def test_probe_point_splits_on_span():
    ctrl = UserControl(B=np.array([[2.0], [0.0]]), v0=np.array([5.0, 3.0]))
    assert probe_point(ctrl, np.array([1.0, 7.0])) == pytest.approx([1.0, 3.0])


def test_seen_item_cannot_be_target():
    model = make_model(np.eye(2))
    ctrl = UserControl(B=np.eye(2), v0=np.zeros(2))
    with pytest.raises(InvalidInputError):
        recourse_sufficient(model, ctrl, 0, [0], 1)


@pytest.mark.parametrize("seed", range(20))
def test_full_rank_history_matches_aligned_reachability(seed):
    model = random_model(seed, 30, 3, bias_scale=0.3, reg=0.1)
    hist = RatingHistory("u", [0, 1, 2, 3], np.random.default_rng(seed).uniform(0, 5, size=4))
    ctrl = control(model, mods_history_edits(hist))
    flags = sufficient_flags(model, ctrl, hist.omega, 2)
    deltas = aligned_deltas(model, 2, hist.omega)
    clear = np.flatnonzero(np.abs(np.nan_to_num(deltas)) > 1e-8)
    assert (flags[clear] == (deltas[clear] > 0)).all()
    assert not flags[hist.omega].any()


@pytest.mark.parametrize("seed", range(30))
def test_constructed_action_reaches_top_n(seed):
    rng = np.random.default_rng(seed)
    model = random_model(100 + seed, 25, 4, bias_scale=0.5, reg=0.1)
    hist = RatingHistory("u", [0, 1, 2], rng.uniform(0, 5, size=3), c_u=0.1)
    mods = mods_reactions(hist, [3, 4])
    ctrl = control(model, mods, hist.c_u)
    omega = mods.omega
    seen = np.zeros(model.m, dtype=bool)
    seen[omega] = True
    B_pinv = pseudoinverse(ctrl.B)
    N = int(rng.integers(1, 4))
    for i in np.flatnonzero(~seen):
        probe = probe_point(ctrl, model.item_factors[i])
        margin = probe_margins(model, np.array([i]), probe[None, :], seen, N)[0]
        if margin <= 1e-8:
            continue
        p = ctrl.latent(B_pinv @ (model.item_factors[i] - ctrl.v0))
        assert p == pytest.approx(probe)
        assert i in top_n(model, p, hist.c_u, omega, N)
        if N == 1 and margin > 1e-4:
            assert exact_recourse_top1(model, ctrl, i, omega).feasible


@pytest.mark.parametrize("seed", range(10))
def test_alignment_check_agrees_with_sufficient_condition(seed):
    model = random_model(200 + seed, 20, 3, bias_scale=0.4)
    rng = np.random.default_rng(seed)
    ctrl = UserControl(B=rng.normal(size=(3, 2)), v0=rng.normal(size=3))
    seen = np.zeros(model.m, dtype=bool)
    seen[[0, 1]] = True
    for i in range(2, model.m):
        probe = probe_point(ctrl, model.item_factors[i])[None, :]
        if abs(probe_margins(model, np.array([i]), probe, seen, 3)[0]) < 1e-9:
            continue
        assert alignment_check(model, ctrl, i, [0, 1], 3) == recourse_sufficient(model, ctrl, i, [0, 1], 3)


# ============= USER RECOURSE =============

def test_full_rank_history_on_available_model():
    model = circle_model(7)
    record = user_recourse(model, RatingHistory("u", [0, 2], [4.0, 1.0]), ModMode.HISTORY, 1, per_item=True)
    assert (record.n_unseen, record.n_reachable) == (5, 5)
    assert record.reachable_fraction == 1.0
    assert record.set_size == 0
    assert record.per_item == {1: True, 3: True, 4: True, 5: True, 6: True}


def test_reaction_mode_needs_recommendations():
    model = circle_model(5)
    with pytest.raises(InvalidInputError):
        user_recourse(model, RatingHistory("u", [0], [3.0]), ModMode.REACTION, 1)


def test_reaction_record_fields():
    model = circle_model(6, reg=0.1)
    record = user_recourse(
        model, RatingHistory("u", [0], [3.0]), "reaction", 1, recommended=[1, 3], policy=ReactionPolicy.RANDOM
    )
    assert record.mode is ModMode.REACTION
    assert record.policy is ReactionPolicy.RANDOM
    assert record.set_size == 2
    assert record.n_unseen == 3
    assert record.per_item is None


def test_empty_history_without_reactions_reaches_nothing_new():
    model = circle_model(4, reg=0.1)
    record = user_recourse(model, RatingHistory("u", [], []), ModMode.HISTORY, 1)
    # p stays at zero where every score ties
    assert record.n_reachable == 0
    assert record.n_unseen == 4


# ============= REACTION SETS =============

def test_top_reaction_set_is_current_top():
    model = random_model(4, 15, 3, bias_scale=0.3, reg=0.1)
    hist = RatingHistory("u", [0, 1], [5.0, 1.0])
    expected = top_n(model, user_factor(model, hist), 0.0, [0, 1], 4)
    assert reaction_set(model, hist, ReactionPolicy.TOP, 4) == expected


def test_random_reaction_set_is_seeded_and_unseen():
    model = random_model(4, 15, 3)
    hist = RatingHistory("u", [0, 1, 2], [5.0, 1.0, 3.0])
    first = reaction_set(model, hist, "random", 5, np.random.default_rng(9))
    assert first == reaction_set(model, hist, "random", 5, np.random.default_rng(9))
    assert len(first) == 5
    assert first == sorted(first)
    assert not set(first) & {0, 1, 2}


def test_random_reaction_set_caps_at_unseen_count():
    model = random_model(4, 5, 2)
    assert reaction_set(model, RatingHistory("u", [0, 1], [1.0, 2.0]), "random", 10) == [2, 3, 4]


# ============= EXACT TOP-1 RECOURSE =============

def test_frozen_ratings_reduce_to_anchor_membership():
    model = make_model(np.eye(2))
    ctrl = UserControl(B=np.eye(2), v0=np.array([1.0, 0.2]))
    assert exact_recourse_top1(model, ctrl, 0, [], 0.0, 0.0).feasible
    assert not exact_recourse_top1(model, ctrl, 1, [], 0.0, 0.0).feasible
    assert exact_recourse_top1(model, ctrl, 1, []).feasible


def test_rating_box_clips_reachable_items():
    # octagon items, actions confined to the unit square in the first quadrant
    model = circle_model(8)
    ctrl = UserControl(B=np.eye(2), v0=np.zeros(2))
    feasible = {i for i in range(8) if exact_recourse_top1(model, ctrl, i, [], 0.0, 1.0).feasible}
    assert feasible == {0, 1, 2}
    assert all(exact_recourse_top1(model, ctrl, i, []).feasible for i in range(8))


def test_witness_action_respects_box():
    model = circle_model(8)
    ctrl = UserControl(B=np.eye(2), v0=np.zeros(2))
    res = exact_recourse_top1(model, ctrl, 1, [], 0.0, 1.0)
    assert res.witness.min() >= -1e-9 and res.witness.max() <= 1 + 1e-9
    assert top_n(model, ctrl.latent(res.witness), 0.0, [], 1) == [1]


def test_inverted_box_rejected():
    model = make_model(np.eye(2))
    with pytest.raises(InvalidInputError):
        exact_recourse_top1(model, UserControl(B=np.eye(2), v0=np.zeros(2)), 0, [], 2.0, 1.0)


@pytest.mark.parametrize("seed", range(10))
def test_unbounded_full_rank_matches_item_availability(seed):
    rng = np.random.default_rng(300 + seed)
    model = make_model(rng.normal(size=(8, 2)))
    ctrl = UserControl(B=rng.normal(size=(2, 3)), v0=rng.normal(size=2))
    for i in range(model.m):
        assert exact_recourse_top1(model, ctrl, i, []).feasible == exact_top1_available(model, i).feasible


@pytest.mark.parametrize("seed", range(15))
def test_shrinking_box_never_adds_feasibility(seed):
    rng = np.random.default_rng(400 + seed)
    model = make_model(rng.normal(size=(6, 2)), b=0.3 * rng.normal(size=6))
    ctrl = UserControl(B=rng.normal(size=(2, 2)), v0=rng.normal(size=2))
    for i in range(model.m):
        wide = exact_recourse_top1(model, ctrl, i, [], 0.0, 5.0).feasible
        narrow = exact_recourse_top1(model, ctrl, i, [], 1.0, 4.0).feasible
        assert wide or not narrow


# ============= L1 DIFFICULTY =============

@pytest.fixture
def two_axis_model():
    return make_model([[1.0, 0.0], [0.0, 1.0], [1.0, 0.2], [0.2, 1.0]], reg=0.1)


def test_current_top_item_costs_nothing(two_axis_model):
    hist = RatingHistory("u", [0, 1], [4.0, 1.0])
    record = difficulty_l1(two_axis_model, hist, 2, ModMode.HISTORY)
    assert record.feasible
    assert record.exact_cost == pytest.approx(0.0, abs=1e-9)


def test_swapping_preference_costs_the_rating_gap(two_axis_model):
    hist = RatingHistory("u", [0, 1], [4.0, 1.0])
    record = difficulty_l1(two_axis_model, hist, 3, ModMode.HISTORY)
    assert record.feasible
    assert record.exact_cost == pytest.approx(3.0, abs=1e-4)


def test_unavailable_target_is_infeasible():
    model = make_model([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [-1.0, -1.0]], reg=0.1)
    record = difficulty_l1(model, RatingHistory("u", [3], [2.0]), 2, ModMode.HISTORY)
    assert record.feasible is False
    assert record.exact_cost is None


def test_difficulty_target_must_be_unseen(two_axis_model):
    with pytest.raises(InvalidInputError):
        difficulty_l1(two_axis_model, RatingHistory("u", [0, 1], [4.0, 1.0]), 0, ModMode.HISTORY)


GRID_AXIS = np.arange(0, 501) / 100.0
GRID_ACTIONS = np.stack(np.meshgrid(GRID_AXIS, GRID_AXIS, indexing="ij"), axis=-1).reshape(-1, 2)


@pytest.mark.parametrize("mode", [ModMode.HISTORY, ModMode.REACTION])
@pytest.mark.parametrize("seed", range(20))
def test_l1_difficulty_matches_grid_search(seed, mode):
    rng = np.random.default_rng(600 + seed)
    model = make_model(rng.normal(size=(6, 2)), b=0.3 * rng.normal(size=6), mu=1.0, reg=0.1)
    if mode is ModMode.HISTORY:
        hist = RatingHistory("u", [0, 1], rng.uniform(0, 5, size=2), c_u=0.2)
        recommended = None
        mods = mods_history_edits(hist)
        a_hat = hist.ratings
    else:
        hist = RatingHistory("u", [0], rng.uniform(0, 5, size=1), c_u=0.2)
        recommended = [1, 2]
        mods = mods_reactions(hist, recommended)
        a_hat = model.mu + model.item_bias[recommended] + hist.c_u + model.item_factors[recommended] @ user_factor(model, hist)
    ctrl = control(model, mods, hist.c_u)
    points = ctrl.v0 + GRID_ACTIONS @ ctrl.B.T
    for i in range(model.m):
        if i in set(mods.omega.tolist()):
            continue
        G, h = item_region(model, i, mods.omega)
        ok = np.all(points @ G.T >= h + default_eps(G), axis=1)
        record = difficulty_l1(model, hist, i, mode, recommended=recommended)
        if not ok.any():
            continue
        best = np.abs(GRID_ACTIONS[ok] - a_hat).sum(axis=1).min()
        assert record.feasible
        assert record.exact_cost <= best + 1e-7
        assert best - record.exact_cost <= 0.02


# ============= DIFFICULTY BOUND =============

def test_identity_controls_bound_is_mean_distance():
    model = make_model([[1.0, 0.0], [0.0, 1.0], [2.0, 1.0], [-1.0, 3.0], [0.5, 0.2]])
    hist = RatingHistory("u", [0, 1], [3.0, 1.0])
    p_u = np.array([3.0, 1.0])
    everything = difficulty_bound(model, hist, ModMode.HISTORY, averaging=Averaging.ALL)
    assert everything.b_pinv_norm == pytest.approx(1.0)
    distances = [np.linalg.norm(model.item_factors[i] - p_u) for i in (2, 3, 4)]
    assert everything.bound_mean == pytest.approx(np.mean(distances))

    reachable = difficulty_bound(model, hist, ModMode.HISTORY, averaging=Averaging.REACHABLE)
    assert reachable.n_averaged == 2
    assert reachable.bound_mean == pytest.approx(np.mean(distances[:2]))
    aligned = [r for r in reachable.records if r.alignment_holds]
    assert [r.item_id for r in aligned] == [2, 3]
    for r in aligned:
        assert r.feasible_point_cost == pytest.approx(r.bound)


def test_regularized_orthonormal_bound_norm():
    model = make_model(np.vstack([np.eye(2), [[1.0, 1.0]]]), reg=0.04)
    result = difficulty_bound(model, RatingHistory("u", [0, 1], [2.0, 2.0]), ModMode.HISTORY)
    assert result.b_pinv_norm == pytest.approx(1.04)
    assert result.unbounded_ratings


def test_empty_averaging_set_gives_nan():
    # the only control moves along the first axis, where both unseen items score zero
    model = make_model([[1.0, 0.0], [0.0, 1.0], [0.0, 0.5]])
    result = difficulty_bound(model, RatingHistory("u", [0], [3.0]), ModMode.HISTORY, averaging=Averaging.REACHABLE)
    assert result.n_averaged == 0
    assert np.isnan(result.bound_mean)
    assert len(result.records) == 2


@pytest.mark.parametrize("mode", [ModMode.HISTORY, ModMode.REACTION])
@pytest.mark.parametrize("seed", range(10))
def test_feasible_point_cost_within_bound(seed, mode):
    rng = np.random.default_rng(700 + seed)
    model = random_model(700 + seed, 20, 3, bias_scale=0.4, reg=0.1)
    hist = RatingHistory("u", [0, 1, 2, 3], rng.uniform(0, 5, size=4), c_u=0.2)
    recommended = [4, 5] if mode is ModMode.REACTION else None
    result = difficulty_bound(model, hist, mode, recommended=recommended, averaging=Averaging.ALL)
    assert result.n_averaged == len(result.records)
    for record in result.records:
        if record.alignment_holds:
            assert record.feasible_point_cost <= record.bound * (1 + 1e-8) + 1e-12
        else:
            assert record.feasible_point_cost is None


# ============= COLD START =============

def test_coldstart_orthonormal_norm():
    model = make_model(np.vstack([np.eye(3), [[1.0, 1.0, 1.0]]]), reg=0.04)
    result = coldstart_eval(model, [0, 1, 2])
    assert result.b_norm_dagger == pytest.approx(1.04)
    assert result.rank == 3
    assert result.n_unseen == 1


def test_coldstart_independent_candidates_on_available_model():
    result = coldstart_eval(circle_model(7, reg=0.1), [0, 2])
    assert result.recourse_count == 5
    assert result.rank == 2


def test_coldstart_duplicate_candidates():
    model = make_model([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.6, 0.8]], reg=0.1)
    result = coldstart_eval(model, [0, 1])
    assert result.rank == 1
    assert result.per_item == {2: False, 3: True, 4: True}
    assert result.recourse_count == 2
    assert result.candidate == [0, 1]


def test_coldstart_empty_candidate():
    with pytest.raises(InvalidInputError):
        coldstart_eval(circle_model(4), [])
