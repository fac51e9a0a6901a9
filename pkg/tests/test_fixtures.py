import numpy as np
import pandas as pd
import pytest

from reach_audit.audits.pipelines import run_item_audit
from reach_audit.data.base_models import BiasSign
from reach_audit.data.ratings import RatingsTable, train_test_split
from reach_audit.errors import InvalidInputError
from reach_audit.fixtures import SynthSpec, TrainConfig, als_train, generate, item_counts, rmse


# ============= SYNTHETIC RATINGS =============

def test_noiseless_dense_ratings_have_planted_rank():
    result = generate(SynthSpec(n_users=12, n_items=9, planted_dim=1, density=1.0, noise=0.0, seed=4))
    R = result.table.dense_matrix()
    assert not np.isnan(R).any()
    assert np.linalg.matrix_rank(R, tol=1e-9) == 1
    assert R == pytest.approx(result.user_factors @ result.item_factors.T)


def test_skew_makes_counts_nonincreasing():
    spec = SynthSpec(n_users=100, n_items=40, density=0.2, skew=1.0, seed=1)
    counts = item_counts(spec)
    assert (np.diff(counts) <= 0).all()
    assert counts[0] > counts[-1]
    observed = generate(spec).table.item_statistics()["n_ratings"].to_numpy()
    assert observed.tolist() == counts.tolist()


def test_generation_is_seeded():
    spec = SynthSpec(n_users=30, n_items=20, density=0.3, seed=7)
    first, second = generate(spec).table.frame, generate(spec).table.frame
    assert first[["user", "item", "rating"]].equals(second[["user", "item", "rating"]])


def test_ratings_stay_in_range():
    table = generate(SynthSpec(n_users=50, n_items=30, density=0.5, noise=2.0, seed=2)).table
    assert table.frame["rating"].between(0.0, 5.0).all()
    assert table.item_ids == [str(i) for i in range(30)]


@pytest.mark.parametrize(
    "kwargs",
    [{"density": 0.0}, {"density": 1.5}, {"noise": -1.0}, {"planted_dim": 0}],
)
def test_invalid_spec(kwargs):
    with pytest.raises(InvalidInputError):
        SynthSpec(**kwargs)


# ============= ALS =============

def rank_one_table():
    frame = pd.DataFrame({"user": ["a", "a", "b", "b"], "item": ["x", "y", "x", "y"], "rating": [1.0, 2.0, 2.0, 4.0]})
    return RatingsTable.from_frame(frame)


def test_biases_are_fit_before_factors():
    result = als_train(rank_one_table(), TrainConfig(dim=1, reg=0.0, sweeps=5))
    model = result.model
    assert model.mu == pytest.approx(2.25)
    assert model.item_bias.tolist() == pytest.approx([-0.75, 0.75])
    assert model.user_bias.tolist() == pytest.approx([-0.75, 0.75])
    residual = np.outer(model.user_factors[:, 0], model.item_factors[:, 0])
    assert residual == pytest.approx(np.array([[0.25, -0.25], [-0.25, 0.25]]), abs=1e-8)
    assert result.train_rmse < 1e-6
    assert model.bias_sign is BiasSign.RESIDUAL


def test_objective_never_increases():
    table = generate(SynthSpec(n_users=60, n_items=30, density=0.3, seed=5)).table
    history = als_train(table, TrainConfig(dim=3, reg=0.1, sweeps=15, tol=0.0)).objective
    for before, after in zip(history, history[1:]):
        assert after <= before * (1 + 1e-9) + 1e-12


def test_unrated_items_get_zero_factors():
    frame = pd.DataFrame({"user": ["a"], "item": ["x"], "rating": [3.0]})
    table = RatingsTable.from_frame(frame, item_ids=["x", "y"])
    model = als_train(table, TrainConfig(dim=2, sweeps=3)).model
    assert model.item_factors[1].tolist() == [0.0, 0.0]
    assert model.item_bias[1] == 0.0
    assert model.external_item_ids == ["x", "y"]


def test_table_without_ratings():
    empty = RatingsTable.from_frame(pd.DataFrame({"user": [], "item": [], "rating": []}), item_ids=["x", "y"])
    result = als_train(empty, TrainConfig(dim=2, sweeps=3))
    assert not result.model.item_factors.any()
    assert result.model.n == 0
    assert np.isnan(result.train_rmse)


def test_parallel_training_matches_serial():
    table = generate(SynthSpec(n_users=40, n_items=20, density=0.4, seed=9)).table
    cfg = TrainConfig(dim=2, sweeps=4)
    serial, threaded = als_train(table, cfg, jobs=1).model, als_train(table, cfg, jobs=3).model
    assert np.array_equal(serial.item_factors, threaded.item_factors)
    assert np.array_equal(serial.user_factors, threaded.user_factors)


def test_more_factors_fit_planted_structure_better():
    errors = {1: [], 4: []}
    for seed in range(3):
        table = generate(SynthSpec(n_users=200, n_items=80, planted_dim=4, density=0.3, noise=0.1, seed=seed)).table
        train, test = train_test_split(table, 0.2, seed=seed)
        for dim in errors:
            model = als_train(train, TrainConfig(dim=dim, reg=0.1, sweeps=20, seed=seed)).model
            errors[dim].append(rmse(model, test))
    assert np.mean(errors[4]) <= np.mean(errors[1])


def test_rmse_skips_unknown_items():
    model = als_train(rank_one_table(), TrainConfig(dim=1, reg=0.0, sweeps=5)).model
    frame = pd.DataFrame({"user": ["a", "a"], "item": ["x", "zzz"], "rating": [1.0, 5.0]})
    assert rmse(model, RatingsTable.from_frame(frame)) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("kwargs", [{"dim": 0}, {"reg": -0.1}, {"sweeps": 0}])
def test_invalid_training_config(kwargs):
    with pytest.raises(InvalidInputError):
        TrainConfig(**kwargs)


# ============= DESK PIPELINE =============

def test_availability_grows_with_model_dimension():
    fractions = {2: [], 4: [], 8: []}
    for seed in range(5):
        table = generate(SynthSpec(n_users=300, n_items=150, planted_dim=4, seed=seed)).table
        for dim in fractions:
            model = als_train(table, TrainConfig(dim=dim, seed=seed)).model
            report, _ = run_item_audit(model, 5, [5])
            fractions[dim].append(report["summary"]["availability_lower_bound"])
    medians = [np.median(fractions[dim]) for dim in sorted(fractions)]
    assert medians == sorted(medians)
