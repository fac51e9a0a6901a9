import numpy as np
import orjson
import pandas as pd
import pytest
from click.testing import CliRunner

import reach_audit.cli as cli_module
from reach_audit.cli import cli, main
from reach_audit.data.bundle import load_bundle, save_model
from reach_audit.data.reports import read_plotdata, read_report
from reach_audit.errors import NumericalError

from .conftest import make_model


def run(*args):
    return CliRunner().invoke(cli, [str(a) for a in args])


def ok(*args):
    result = run(*args)
    assert result.exit_code == 0, result.output
    return result


def write_lines(path, lines):
    path.write_text("".join(f"{line}\n" for line in lines))
    return path


@pytest.fixture
def desk(tmp_path):
    """Synthetic ratings and a model trained on them."""
    ratings = tmp_path / "ratings.dat"
    ok("synth", "--users", 40, "--items", 20, "--dim", 2, "--density", 0.4, "--seed", 3, "--out", ratings)
    model = tmp_path / "model"
    ok("train", "--ratings", ratings, "--dim", 2, "--sweeps", 5, "--test-frac", 0.2, "--out", model)
    return ratings, model


@pytest.fixture
def circle_bundle(tmp_path):
    angles = 2 * np.pi * np.arange(7) / 7
    return save_model(make_model(np.column_stack([np.cos(angles), np.sin(angles)]), reg=0.1), tmp_path / "circle")


# ============= PIPELINES =============

def test_desk_pipeline(desk, tmp_path):
    ratings, model = desk
    extras = load_bundle(model).extras
    assert extras["sweeps_run"] >= 1
    assert "test_rmse" in extras

    out, plot = tmp_path / "items.json", tmp_path / "items.csv"
    ok("audit-items", "--model", model, "--ratings", ratings, "-N", 1, "--n-values", "1,2",
       "--exact", "--out", out, "--plot", plot)
    report = read_report(out)
    assert report["summary"]["m"] == 20
    assert len(report["records"]) == 20
    assert [row["N"] for row in report["summary"]["curve"]] == [1, 2]
    assert report["config"]["subcommand"] == "audit-items"
    assert all(r["exact_top1_available"] is not None for r in report["records"])
    assert set(read_plotdata(plot)["series"]) == {"aligned_reachable_vs_N", "availability_vs_N"}


def test_reports_are_byte_identical_across_runs_and_jobs(desk, tmp_path):
    ratings, model = desk
    out = tmp_path / "recourse.json"
    args = ["recourse", "--model", model, "--ratings", ratings, "--mode", "reaction", "--policy", "random",
            "--users", 10, "--seed", 5, "-N", 2, "--out", out]
    ok(*args)
    first = out.read_bytes()
    ok(*args)
    assert out.read_bytes() == first
    ok("--jobs", 2, *args)
    assert out.read_bytes() == first


def test_recourse_compares_policies(desk, tmp_path):
    ratings, model = desk
    out, plot = tmp_path / "r.json", tmp_path / "r.csv"
    ok("recourse", "--model", model, "--ratings", ratings, "--mode", "reaction", "--policy", "random",
       "--policy", "top", "--users", 10, "-N", 1, "--out", out, "--plot", plot)
    report = read_report(out)
    assert len(report["records"]) == 20
    assert {"mean_fraction_reaction_random", "mean_fraction_reaction_top"} <= set(report["summary"])
    assert report["config"]["policies"] == ["random", "top"]
    assert set(read_plotdata(plot)["series"]) == {"fraction_vs_history_reaction_random", "fraction_vs_history_reaction_top"}


def test_recourse_full_rank_history(circle_bundle, tmp_path):
    ratings = write_lines(tmp_path / "one.dat", ["u::0::4", "u::2::1"])
    out = tmp_path / "r.json"
    ok("recourse", "--model", circle_bundle, "--ratings", ratings, "--mode", "history", "-N", 1, "--out", out)
    report = read_report(out)
    assert report["summary"]["unbounded_ratings"] is True
    (record,) = report["records"]
    assert record["reachable_fraction"] == 1.0
    assert record["n_unseen"] == 5


def test_popularity_report(desk, tmp_path):
    ratings, model = desk
    out, plot = tmp_path / "pop.json", tmp_path / "pop.csv"
    ok("popularity", "--model", model, "--ratings", ratings, "-N", 2, "--out", out, "--plot", plot)
    report = read_report(out)
    assert report["summary"]["available"] + report["summary"]["unavailable"] == 20
    assert report["summary"]["flags_at_n"] == 2
    series = set(read_plotdata(plot)["series"])
    assert {"rating_count", "n_ratings_all_cdf", "mean_rating_all_cdf"} <= series


def test_csv_output(desk, tmp_path):
    _, model = desk
    out = tmp_path / "items.csv"
    ok("audit-items", "--model", model, "-N", 3, "--out", out, "--out-format", "csv")
    header = out.read_text().splitlines()[0].split(",")
    assert header[:4] == ["item_id", "external_id", "delta", "aligned_reachable"]


def test_train_on_listen_counts(tmp_path):
    plays = write_lines(tmp_path / "plays.csv", [
        "user,artist,plays", "a,x,40", "a,x,30", "b,x,5", "b,y,3", "c,y,2", "c,z,90",
    ])
    ok("train", "--ratings", plays, "--format", "csv", "--listens", "--min-listens", 10,
       "--dim", 1, "--sweeps", 2, "--out", tmp_path / "model")
    assert load_bundle(tmp_path / "model").model.external_item_ids == ["x", "z"]


# ============= DIFFICULTY =============

@pytest.fixture
def midpoint_bundle(tmp_path):
    model = make_model([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [-1.0, -1.0]], reg=0.1)
    return save_model(model, tmp_path / "midpoint")


def test_unavailable_target_is_infeasible_for_everyone(midpoint_bundle, tmp_path):
    ratings = write_lines(tmp_path / "r.dat", ["u1::3::1", "u2::3::2", "u3::3::3"])
    out = tmp_path / "d.json"
    ok("difficulty", "--model", midpoint_bundle, "--ratings", ratings, "--item", "2", "--out", out)
    report = read_report(out)
    assert report["summary"]["n_users"] == 3
    assert report["summary"]["n_infeasible"] == 3
    assert report["summary"]["mean_cost"] is None
    assert all(r["feasible"] is False for r in report["records"])
    assert report["config"]["bounds"] == [0.0, 5.0]


def test_current_favourite_costs_nothing(tmp_path):
    model = save_model(make_model([[1.0, 0.0], [0.0, 1.0], [1.0, 0.2]], reg=0.1), tmp_path / "m")
    ratings = write_lines(tmp_path / "r.dat", ["u1::2::4", "u2::2::3", "u3::0::5"])
    out = tmp_path / "d.json"
    ok("difficulty", "--model", model, "--ratings", ratings, "--item", "0", "--avg", "all", "--out", out)
    report = read_report(out)
    assert report["summary"]["n_skipped"] == 1
    assert [r["user_id"] for r in report["records"]] == ["u1", "u2"]
    for record in report["records"]:
        assert record["feasible"]
        assert record["exact_cost"] == pytest.approx(0.0, abs=1e-9)
        assert "bound_mean" in record


@pytest.mark.parametrize("extra,header", [
    ([], ["user_id", "history_len", "feasible", "exact_cost"]),
    (["--avg", "all"], ["user_id", "history_len", "feasible", "exact_cost", "bound_mean", "b_pinv_norm", "n_averaged"]),
])
def test_difficulty_csv_without_records_keeps_header(midpoint_bundle, tmp_path, extra, header):
    ratings = write_lines(tmp_path / "r.dat", ["u1::2::1", "u2::2::4"])
    out = tmp_path / "d.csv"
    ok("difficulty", "--model", midpoint_bundle, "--ratings", ratings, "--item", "2",
       "--out-format", "csv", "--out", out, *extra)
    frame = pd.read_csv(out)
    assert list(frame.columns) == header
    assert frame.empty


def test_unknown_target_item(midpoint_bundle, tmp_path):
    ratings = write_lines(tmp_path / "r.dat", ["u1::3::1"])
    result = run("difficulty", "--model", midpoint_bundle, "--ratings", ratings, "--item", "nope", "--out", tmp_path / "d.json")
    assert result.exit_code == 1


# ============= COLD START =============

def test_coldstart_counts(circle_bundle, tmp_path):
    out = tmp_path / "c.json"
    ok("coldstart", "--model", circle_bundle, "--items", "0,2", "-N", 1, "--out", out)
    report = read_report(out)
    assert report["summary"]["recourse_count"] == 5
    assert report["summary"]["candidate"] == ["0", "2"]
    assert len(report["records"]) == 5


def test_coldstart_empty_candidate(circle_bundle, tmp_path):
    assert run("coldstart", "--model", circle_bundle, "--items", ",", "--out", tmp_path / "c.json").exit_code == 1


# ============= EXIT CODES =============

def test_missing_bundle_is_usage_error(tmp_path):
    assert run("audit-items", "--model", tmp_path / "absent", "--out", tmp_path / "o.json").exit_code == 1


def test_malformed_ratings_exit_two(circle_bundle, tmp_path):
    bad = write_lines(tmp_path / "bad.dat", ["u::0::4", "u::1"])
    result = run("audit-items", "--model", circle_bundle, "--ratings", bad, "--out", tmp_path / "o.json")
    assert result.exit_code == 2
    assert "bad.dat:2" in result.output


def test_broken_bundle_exit_two(circle_bundle, tmp_path):
    (circle_bundle / "manifest.json").write_bytes(orjson.dumps({"format_version": 99}))
    assert run("audit-items", "--model", circle_bundle, "--out", tmp_path / "o.json").exit_code == 2


def test_bad_bounds_and_eps(circle_bundle, tmp_path):
    ratings = write_lines(tmp_path / "r.dat", ["u::0::4"])
    out = tmp_path / "o.json"
    assert run("recourse", "--model", circle_bundle, "--ratings", ratings, "--bounds", "5:0", "--out", out).exit_code == 1
    assert run("--eps", 0, "coldstart", "--model", circle_bundle, "--items", "0", "--out", out).exit_code == 1


def test_numerical_failure_exit_three(circle_bundle, tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise NumericalError("simplex iteration cap reached", basis=[0, 1])

    monkeypatch.setattr(cli_module, "run_coldstart", fail)
    result = run("coldstart", "--model", circle_bundle, "--items", "0", "--out", tmp_path / "c.json")
    assert result.exit_code == 3
    assert not (tmp_path / "c.json").exists()


def test_main_returns_exit_code(circle_bundle, tmp_path):
    out = tmp_path / "c.json"
    assert main(["coldstart", "--model", str(circle_bundle), "--items", "1", "--out", str(out)]) == 0
    assert out.exists()
    assert main(["coldstart", "--model", str(circle_bundle), "--items", "99", "--out", str(out)]) == 1
    assert main(["no-such-command"]) == 1
