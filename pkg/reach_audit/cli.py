"""
Command-line entry point: ``python -m reach_audit <command> ...``.

Exit codes: 0 success, 1 usage or invalid input, 2 unparseable input file,
3 numerical failure. Reports go to files; logs and progress bars go to stderr.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
from rich.console import Console
from rich.logging import RichHandler

from reach_audit.audits.pipelines import (
    COLDSTART_COLUMNS,
    ITEM_COLUMNS,
    POPULARITY_COLUMNS,
    RECOURSE_COLUMNS,
    difficulty_columns,
    restrict_to_top_items,
    run_coldstart,
    run_difficulty,
    run_item_audit,
    run_popularity,
    run_recourse,
)
from reach_audit.config import (
    AUDIT_DEFAULTS,
    DEFAULT_TOLERANCES,
    FIXTURE_DEFAULTS,
    MODEL_DEFAULTS,
    RATING_HI,
    RATING_LO,
    RECOURSE_DEFAULTS,
    TRAINING_DEFAULTS,
    Tolerances,
    get_jobs,
    get_log_level,
)
from reach_audit.data.base_models import Averaging, BiasSign, ModMode, RatingFormat, ReactionPolicy, ReportFormat
from reach_audit.data.bundle import load_model, save_model
from reach_audit.data.ratings import (
    RatingsTable,
    aggregate_listens,
    log1p_transform,
    parse_ratings,
    rating_distribution,
    train_test_split,
    write_ratings,
)
from reach_audit.data.reports import emit_plotdata, write_report
from reach_audit.errors import ReachAuditError, UsageError
from reach_audit.fixtures.als import TrainConfig, als_train, rmse
from reach_audit.fixtures.synth import SynthSpec, generate

logger = logging.getLogger("reach_audit")


@dataclass
class RunConfig:
    """Everything a run depends on; echoed into every report."""

    subcommand: str
    model: Optional[str] = None
    ratings: Optional[str] = None
    format: Optional[str] = None
    listens: bool = False
    N: Optional[int] = None
    n_h: Optional[int] = None
    n_values: List[int] = field(default_factory=list)
    exact: bool = False
    mode: Optional[str] = None
    policies: List[str] = field(default_factory=list)
    set_size: Optional[int] = None
    bounds: Optional[Tuple[float, float]] = None
    users: Optional[int] = None
    seed: Optional[int] = None
    top_items: Optional[int] = None
    averaging: Optional[str] = None
    item: Optional[str] = None
    candidate: List[str] = field(default_factory=list)
    out: Optional[str] = None
    plot: Optional[str] = None
    tolerances: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if self.bounds is not None:
            data["bounds"] = [_json_bound(b) for b in self.bounds]
        return data


def _json_bound(value: float) -> Any:
    return value if math.isfinite(value) else ("inf" if value > 0 else "-inf")


@dataclass
class CliState:
    jobs: int
    tolerances: Tolerances


def configure_logging(level: str) -> None:
    root = logging.getLogger("reach_audit")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


# ============= ARGUMENT HELPERS =============

def parse_bounds(text: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(part) for part in text.split(":"))
    except ValueError:
        raise click.BadParameter(f"expected LO:HI, got {text!r}", param_hint="--bounds")
    if lo > hi:
        raise click.BadParameter(f"lower bound {lo} exceeds upper bound {hi}", param_hint="--bounds")
    return lo, hi


def parse_int_list(text: Optional[str]) -> List[int]:
    if not text:
        return []
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}", param_hint="--n-values")
    if any(v < 1 for v in values):
        raise click.BadParameter("every N must be >= 1", param_hint="--n-values")
    return values


def load_table(path: str, fmt: str, listens: bool, min_listens: float) -> RatingsTable:
    if listens:
        return log1p_transform(aggregate_listens(parse_ratings(path, fmt, rating_range=None), min_listens))
    return parse_ratings(path, fmt)


def _write_outputs(
    report: Dict[str, Any], curves, out: str, out_format: str, plot: Optional[str], columns: List[str]
) -> None:
    write_report(report, out, ReportFormat(out_format), columns)
    if plot and curves:
        emit_plotdata(curves, plot)


def _state(ctx: click.Context) -> CliState:
    return ctx.find_object(CliState)


def _base_config(ctx: click.Context, name: str, **values: Any) -> RunConfig:
    return RunConfig(subcommand=name, tolerances=_state(ctx).tolerances.to_dict(), **values)


MODEL_DIR = click.Path(exists=True, file_okay=False, dir_okay=True)
READABLE_FILE = click.Path(exists=True, dir_okay=False)
FORMATS = click.Choice([f.value for f in RatingFormat])
OUT_FORMATS = click.Choice([f.value for f in ReportFormat])


def ratings_options(required: bool):
    def decorate(fn):
        fn = click.option("--min-listens", type=float, default=50, show_default=True,
                          help="With --listens, drop items with fewer total listens.")(fn)
        fn = click.option("--listens", is_flag=True, help="Values are play counts: aggregate, then log(1+x).")(fn)
        fn = click.option("--format", "fmt", type=FORMATS, default=RatingFormat.MLENS.value, show_default=True)(fn)
        fn = click.option("--ratings", type=READABLE_FILE, required=required, help="Ratings file.")(fn)
        return fn
    return decorate


def output_options(fn):
    fn = click.option("--plot", type=click.Path(dir_okay=False), default=None, help="Plot-data CSV.")(fn)
    fn = click.option("--out-format", type=OUT_FORMATS, default=ReportFormat.JSON.value, show_default=True)(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), required=True, help="Report file.")(fn)
    return fn


class AuditGroup(click.Group):
    """Maps library errors and usage errors onto the documented exit codes."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except ReachAuditError as e:
            logger.error(str(e))
            click.echo(f"error: {e}", err=True)
            raise click.exceptions.Exit(e.exit_code)
        except OSError as e:
            click.echo(f"error: {e}", err=True)
            raise click.exceptions.Exit(2)

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else 0
        except click.UsageError as e:
            e.show()
            code = 1
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            code = 1
        if standalone_mode:
            sys.exit(code)
        return code


@click.group(cls=AuditGroup)
@click.option("--jobs", type=int, default=None, help="Worker threads (env REACH_AUDIT_JOBS).")
@click.option("--log-level", default=None, help="Logging level (env REACH_AUDIT_LOG_LEVEL).")
@click.option("--eps", type=float, default=None, help="Fixed strict-inequality margin.")
@click.pass_context
def cli(ctx: click.Context, jobs: Optional[int], log_level: Optional[str], eps: Optional[float]):
    """Reachability audits for top-N linear-preference recommenders."""
    configure_logging(get_log_level(log_level))
    if eps is not None and not eps > 0:
        raise click.BadParameter("eps must be positive", param_hint="--eps")
    ctx.obj = CliState(jobs=get_jobs(jobs), tolerances=DEFAULT_TOLERANCES.with_overrides(eps=eps))


# ============= ITEMS =============

@cli.command("audit-items")
@click.option("--model", "model_dir", type=MODEL_DIR, required=True, help="Model bundle directory.")
@ratings_options(required=False)
@click.option("-N", "n", type=click.IntRange(min=1), default=int(AUDIT_DEFAULTS.get("n", 5)), show_default=True)
@click.option("--nh", type=click.IntRange(min=0), default=int(AUDIT_DEFAULTS.get("n_h", 0)), show_default=True)
@click.option("--n-values", default=",".join(str(v) for v in AUDIT_DEFAULTS.get("n_values", [])), show_default=True)
@click.option("--exact", is_flag=True, help="Also decide top-1 availability exactly by LP.")
@output_options
@click.pass_context
def audit_items(ctx, model_dir, ratings, fmt, listens, min_listens, n, nh, n_values, exact, out, out_format, plot):
    """Aligned-reachability of every item over a list of N values."""
    state = _state(ctx)
    values = parse_int_list(n_values)
    cfg = _base_config(ctx, "audit-items", model=model_dir, ratings=ratings, format=fmt, listens=listens,
                       N=n, n_h=nh, n_values=values, exact=exact, out=out, plot=plot)
    model = load_model(model_dir)
    table = load_table(ratings, fmt, listens, min_listens) if ratings else None
    report, curves = run_item_audit(model, n, values, nh, exact, table, state.tolerances, state.jobs, cfg.to_dict())
    _write_outputs(report, curves, out, out_format, plot, ITEM_COLUMNS)
    summary = report["summary"]
    logger.info(f"{summary['aligned_reachable']}/{summary['m']} items aligned-reachable at N'={summary['n_prime']}")


@cli.command("popularity")
@click.option("--model", "model_dir", type=MODEL_DIR, required=True)
@ratings_options(required=True)
@click.option("-N", "n", type=click.IntRange(min=1), default=int(AUDIT_DEFAULTS.get("n", 5)), show_default=True)
@click.option("--nh", type=click.IntRange(min=0), default=int(AUDIT_DEFAULTS.get("n_h", 0)), show_default=True)
@click.option("--exact", is_flag=True, help="Use exact top-1 availability instead of aligned-reachability.")
@click.option("--top-items", type=click.IntRange(min=1), default=None)
@output_options
@click.pass_context
def popularity(ctx, model_dir, ratings, fmt, listens, min_listens, n, nh, exact, top_items, out, out_format, plot):
    """Popularity CDFs of available versus unavailable items."""
    state = _state(ctx)
    cfg = _base_config(ctx, "popularity", model=model_dir, ratings=ratings, format=fmt, listens=listens,
                       N=n, n_h=nh, exact=exact, top_items=top_items, out=out, plot=plot)
    model, table = restrict_to_top_items(load_model(model_dir), load_table(ratings, fmt, listens, min_listens), top_items)
    report, curves = run_popularity(model, table, n, nh, exact, state.tolerances, state.jobs, cfg.to_dict())
    curves.update(rating_distribution(table))
    _write_outputs(report, curves, out, out_format, plot, POPULARITY_COLUMNS)


# ============= USERS =============

def _user_options(fn):
    fn = click.option("--top-items", type=click.IntRange(min=1),
                      default=RECOURSE_DEFAULTS.get("top_items"), show_default=True)(fn)
    fn = click.option("--seed", type=int, default=int(RECOURSE_DEFAULTS.get("seed", 0)), show_default=True)(fn)
    fn = click.option("--users", type=click.IntRange(min=1),
                      default=RECOURSE_DEFAULTS.get("users"), show_default=True)(fn)
    fn = click.option("--bounds", default=f"{RATING_LO:g}:{RATING_HI:g}", show_default=True, help="Rating interval LO:HI.")(fn)
    fn = click.option("--mode", type=click.Choice([m.value for m in ModMode]),
                      default=RECOURSE_DEFAULTS.get("mode", "history"), show_default=True)(fn)
    return fn


@cli.command("recourse")
@click.option("--model", "model_dir", type=MODEL_DIR, required=True)
@ratings_options(required=True)
@_user_options
@click.option("--policy", "policies", type=click.Choice([p.value for p in ReactionPolicy]), multiple=True,
              help="Reaction set policy; repeat to compare several.")
@click.option("--set-size", type=click.IntRange(min=1), default=int(RECOURSE_DEFAULTS.get("set_size", 5)), show_default=True)
@click.option("-N", "n", type=click.IntRange(min=1), default=int(AUDIT_DEFAULTS.get("n", 5)), show_default=True)
@output_options
@click.pass_context
def recourse(ctx, model_dir, ratings, fmt, listens, min_listens, mode, bounds, users, seed, top_items,
             policies, set_size, n, out, out_format, plot):
    """Amount of recourse per sampled user (sufficient-condition screening)."""
    state = _state(ctx)
    lo_hi = parse_bounds(bounds)
    policies = list(policies) or [RECOURSE_DEFAULTS.get("policy", ReactionPolicy.RANDOM.value)]
    cfg = _base_config(ctx, "recourse", model=model_dir, ratings=ratings, format=fmt, listens=listens, N=n,
                       mode=mode, policies=policies if mode == ModMode.REACTION.value else [], set_size=set_size,
                       bounds=lo_hi, users=users, seed=seed, top_items=top_items, out=out, plot=plot)
    model, table = restrict_to_top_items(load_model(model_dir), load_table(ratings, fmt, listens, min_listens), top_items)
    report, curves = run_recourse(model, table, ModMode(mode), [ReactionPolicy(p) for p in policies], set_size, n,
                                  users, seed, state.tolerances, state.jobs, cfg.to_dict())
    _write_outputs(report, curves, out, out_format, plot, RECOURSE_COLUMNS)


@cli.command("difficulty")
@click.option("--model", "model_dir", type=MODEL_DIR, required=True)
@ratings_options(required=True)
@_user_options
@click.option("--item", required=True, help="External id of the target item.")
@click.option("--policy", type=click.Choice([p.value for p in ReactionPolicy]),
              default=RECOURSE_DEFAULTS.get("policy", "random"), show_default=True)
@click.option("--set-size", type=click.IntRange(min=1),
              default=int(RECOURSE_DEFAULTS.get("difficulty_set_size", 20)), show_default=True)
@click.option("--avg", "averaging", type=click.Choice([a.value for a in Averaging]), default=None,
              help="Also report the spectral difficulty bound, averaged over this item set.")
@output_options
@click.pass_context
def difficulty(ctx, model_dir, ratings, fmt, listens, min_listens, mode, bounds, users, seed, top_items,
               item, policy, set_size, averaging, out, out_format, plot):
    """l1 cost for each sampled user to make one item their top recommendation."""
    state = _state(ctx)
    lo, hi = parse_bounds(bounds)
    cfg = _base_config(ctx, "difficulty", model=model_dir, ratings=ratings, format=fmt, listens=listens, N=1,
                       mode=mode, policies=[policy] if mode == ModMode.REACTION.value else [], set_size=set_size,
                       bounds=(lo, hi), users=users, seed=seed, top_items=top_items, averaging=averaging,
                       item=item, out=out, plot=plot)
    model, table = restrict_to_top_items(load_model(model_dir), load_table(ratings, fmt, listens, min_listens), top_items)
    report, curves = run_difficulty(
        model, table, item, ModMode(mode), ReactionPolicy(policy), set_size, users, seed, lo, hi,
        Averaging(averaging) if averaging else None, state.tolerances, state.jobs, cfg.to_dict(),
    )
    columns = difficulty_columns(Averaging(averaging) if averaging else None)
    _write_outputs(report, curves, out, out_format, plot, columns)


@cli.command("coldstart")
@click.option("--model", "model_dir", type=MODEL_DIR, required=True)
@click.option("--items", "items", required=True, help="Comma-separated external ids of the onboarding set.")
@click.option("-N", "n", type=click.IntRange(min=1), default=int(AUDIT_DEFAULTS.get("n", 5)), show_default=True)
@output_options
@click.pass_context
def coldstart(ctx, model_dir, items, n, out, out_format, plot):
    """Evaluate an onboarding item set for users with no history."""
    state = _state(ctx)
    candidate = [c.strip() for c in items.split(",") if c.strip()]
    if not candidate:
        raise UsageError("--items names no onboarding items")
    cfg = _base_config(ctx, "coldstart", model=model_dir, N=n, candidate=candidate, out=out, plot=plot)
    report = run_coldstart(load_model(model_dir), candidate, n, state.tolerances, cfg.to_dict())
    _write_outputs(report, {}, out, out_format, plot, COLDSTART_COLUMNS)


# ============= FIXTURES =============

@cli.command("synth")
@click.option("--users", "n_users", type=click.IntRange(min=1), default=int(FIXTURE_DEFAULTS.get("n_users", 300)), show_default=True)
@click.option("--items", "n_items", type=click.IntRange(min=1), default=int(FIXTURE_DEFAULTS.get("n_items", 150)), show_default=True)
@click.option("--dim", type=click.IntRange(min=1), default=int(FIXTURE_DEFAULTS.get("planted_dim", 4)), show_default=True)
@click.option("--density", type=click.FloatRange(0, 1, min_open=True), default=float(FIXTURE_DEFAULTS.get("density", 0.1)), show_default=True)
@click.option("--noise", type=click.FloatRange(min=0), default=float(FIXTURE_DEFAULTS.get("noise", 0.1)), show_default=True)
@click.option("--skew", type=click.FloatRange(min=0), default=float(FIXTURE_DEFAULTS.get("skew", 0.0)), show_default=True)
@click.option("--seed", type=int, default=int(FIXTURE_DEFAULTS.get("seed", 0)), show_default=True)
@click.option("--format", "fmt", type=FORMATS, default=RatingFormat.MLENS.value, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Ratings file to write.")
def synth(n_users, n_items, dim, density, noise, skew, seed, fmt, out):
    """Write a synthetic ratings file with planted low-rank structure."""
    spec = SynthSpec(n_users, n_items, dim, density, noise, skew, seed)
    write_ratings(generate(spec).table, out, fmt)


@cli.command("train")
@ratings_options(required=True)
@click.option("--dim", type=click.IntRange(min=1), default=int(TRAINING_DEFAULTS.get("dim", 4)), show_default=True)
@click.option("--lambda", "reg", type=click.FloatRange(min=0), default=float(TRAINING_DEFAULTS.get("lambda", 0.04)), show_default=True)
@click.option("--sweeps", type=click.IntRange(min=1), default=int(TRAINING_DEFAULTS.get("sweeps", 30)), show_default=True)
@click.option("--seed", type=int, default=int(TRAINING_DEFAULTS.get("seed", 0)), show_default=True)
@click.option("--bias-sign", type=click.Choice([b.value for b in BiasSign]),
              default=MODEL_DEFAULTS.get("bias_sign", BiasSign.ADDITIVE.value),
              show_default=True, help="Bias convention stamped on the model for the user update.")
@click.option("--test-frac", type=click.FloatRange(0, 1, max_open=True), default=0.0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Model bundle directory to write.")
@click.pass_context
def train(ctx, ratings, fmt, listens, min_listens, dim, reg, sweeps, seed, bias_sign, test_frac, out):
    """Fit a biased factor model by ALS and save it as a bundle."""
    state = _state(ctx)
    table = load_table(ratings, fmt, listens, min_listens)
    train_part, test_part = train_test_split(table, test_frac, seed) if test_frac > 0 else (table, None)
    cfg = TrainConfig(dim=dim, reg=reg, sweeps=sweeps, seed=seed, bias_sign=BiasSign(bias_sign))
    result = als_train(train_part, cfg, jobs=state.jobs)
    extras: Dict[str, Any] = {
        "train": cfg.to_dict(),
        "sweeps_run": result.sweeps_run,
        "objective": result.objective,
        "train_rmse": result.train_rmse,
    }
    if test_part is not None:
        extras["test_fraction"] = test_frac
        extras["test_rmse"] = rmse(result.model, test_part)
    save_model(result.model, out, extras)


def main(argv: Optional[Sequence[str]] = None) -> int:
    return cli.main(args=list(argv) if argv is not None else None, prog_name="reach-audit", standalone_mode=False)
