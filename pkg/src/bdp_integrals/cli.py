"""
Command-line entrypoints for bdp_integrals.

Curves are written as CSV (``t_or_w,cdf,density,err``), everything else as JSON.
Numbers carry 12 significant digits so identical invocations give identical output.
"""

from __future__ import annotations

import json
import logging
import math
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click
import numpy as np
import typer

from bdp_integrals.core.laplace import DistCurve, InversionPlan, parse_grid
from bdp_integrals.core.modelspec import BdpModel, ModelKind, TabooSet, load_model_file, make_model
from bdp_integrals.core.passage import explosion_check, fpt_cdf, fpt_density, transition_curve
from bdp_integrals.core.reward import reward_cdf, reward_density
from bdp_integrals.core.search import SearchResult, min_control, min_strike, option_family, sis_family
from bdp_integrals.core.simulation import empirical_cdf, simulate_many, write_paths_csv
from bdp_integrals.errors import (
    ConvergenceError,
    InfeasibleSearchError,
    ModelError,
    MonotonicityError,
    PreconditionError,
)
from bdp_integrals.ledger import get_run_recorder

logger = logging.getLogger(__name__)

app = typer.Typer(help="Passage-time and reward-integral distributions of birth-death processes.")

CSV_HEADER = "t_or_w,cdf,density,err"


class LogLevel(str, Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


class Quantity(str, Enum):
    REWARD = "reward"
    TIME = "time"


class Figure(str, Enum):
    FIG2 = "fig2"
    FIG3 = "fig3"
    FIG4 = "fig4"
    FIG5 = "fig5"
    FIG6 = "fig6"


MODEL_OPTION = typer.Option(None, "--model", "-m", help="JSON model file.")
KIND_OPTION = typer.Option(None, "--kind", "-k", help="Built-in model kind (kendall, mm_queue, moran, sis, option).")
PARAM_OPTION = typer.Option(None, "--param", "-p", help="Model parameter as name=value; repeatable.")
GRID_OPTION = typer.Option(..., "--grid", help="Evaluation grid start:stop:step.")
GAMMA_OPTION = typer.Option(None, "--gamma", help="Target digits of the inversion discretization error.")
TOL_OPTION = typer.Option(None, "--tol", help="Continued-fraction truncation tolerance per point.")
OUT_OPTION = typer.Option(None, "--out", "-o", help="Write output to this file instead of stdout.")
THREADS_OPTION = typer.Option(1, "--threads", min=1, help="Worker threads.")
LOWER_OPTION = typer.Option(None, "--lower", help="Lower barrier state (overrides the model).")
UPPER_OPTION = typer.Option(None, "--upper", help="Upper barrier state (overrides the model).")


@app.callback()
def configure(
    log_level: LogLevel = typer.Option(LogLevel.WARNING, "--log-level", case_sensitive=False, help="Log level."),
) -> None:
    logging.basicConfig(
        level=log_level.value,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _parse_params(items: Optional[List[str]]) -> Dict[str, float]:
    params: Dict[str, float] = {}
    for item in items or []:
        name, sep, raw = item.partition("=")
        if not sep or not name.strip():
            raise typer.BadParameter(f"Parameter '{item}' must have the form name=value.")
        try:
            params[name.strip()] = float(raw)
        except ValueError as exc:
            raise typer.BadParameter(f"Parameter '{name}' has a non-numeric value '{raw}'.") from exc
    return params


def _load_model(model_file: Optional[Path], kind: Optional[str], params: Optional[List[str]]) -> BdpModel:
    if model_file and kind:
        raise typer.BadParameter("Provide either --model or --kind, not both.")
    if model_file:
        if params:
            raise typer.BadParameter("--param only applies together with --kind.")
        return load_model_file(model_file)
    if not kind:
        raise typer.BadParameter("Provide a model with --model FILE or --kind KIND.")
    try:
        kind = ModelKind(kind)
    except ValueError as exc:
        raise typer.BadParameter(f"Unknown model kind '{kind}'.") from exc
    return make_model(kind, _parse_params(params))


def _taboo(lower: Optional[int], upper: Optional[int]) -> Optional[TabooSet]:
    if lower is None and upper is None:
        return None
    return TabooSet(lower=lower, upper=upper)


def _plan(gamma: Optional[float], tol: Optional[float]) -> InversionPlan:
    return InversionPlan.from_settings(gamma=gamma, trunc_tol=tol)


def _number(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.12g}"


def curve_to_csv(curve: DistCurve) -> str:
    lines = [CSV_HEADER]
    for row in curve.to_rows():
        lines.append(",".join(_number(value) for value in row))
    return "\n".join(lines) + "\n"


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def to_json(payload: Any) -> str:
    return json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        typer.echo(text, nl=False)
        return
    out.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", out)


def _report(curve: DistCurve) -> None:
    for message in curve.warnings:
        typer.echo(f"warning: {message}", err=True)


def _distribution(curves: List[DistCurve]) -> DistCurve:
    curve = curves[0]
    for other in curves[1:]:
        curve = curve.merge(other)
    return curve


@app.command()
def transition(
    i: int = typer.Option(..., "--i", min=0, help="Initial state."),
    j: int = typer.Option(..., "--j", min=0, help="Target state."),
    grid: str = GRID_OPTION,
    model: Optional[Path] = MODEL_OPTION,
    kind: Optional[str] = KIND_OPTION,
    param: Optional[List[str]] = PARAM_OPTION,
    gamma: Optional[float] = GAMMA_OPTION,
    tol: Optional[float] = TOL_OPTION,
    out: Optional[Path] = OUT_OPTION,
) -> int:
    """
    Transition probabilities P_ij(t) over a time grid.
    """
    bdp = _load_model(model, kind, param)
    curve = transition_curve(bdp, i, j, parse_grid(grid), _plan(gamma, tol))
    _report(curve)
    _emit(curve_to_csv(curve), out)
    return 0


@app.command()
def fpt(
    i: int = typer.Option(..., "--i", min=0, help="Initial state."),
    grid: str = GRID_OPTION,
    cdf: bool = typer.Option(True, "--cdf/--no-cdf", help="Emit the distribution function."),
    density: bool = typer.Option(False, "--density/--no-density", help="Emit the density."),
    lower: Optional[int] = LOWER_OPTION,
    upper: Optional[int] = UPPER_OPTION,
    model: Optional[Path] = MODEL_OPTION,
    kind: Optional[str] = KIND_OPTION,
    param: Optional[List[str]] = PARAM_OPTION,
    gamma: Optional[float] = GAMMA_OPTION,
    tol: Optional[float] = TOL_OPTION,
    out: Optional[Path] = OUT_OPTION,
) -> int:
    """
    First-passage time distribution into the taboo set.
    """
    if not (cdf or density):
        raise typer.BadParameter("Nothing to compute: enable --cdf or --density.")
    bdp = _load_model(model, kind, param)
    taboo, points, plan = _taboo(lower, upper), parse_grid(grid), _plan(gamma, tol)
    curves = []
    if cdf:
        curves.append(fpt_cdf(bdp, i, taboo, points, plan))
    if density:
        curves.append(fpt_density(bdp, i, taboo, points, plan))
    curve = _distribution(curves)
    _report(curve)
    _emit(curve_to_csv(curve), out)
    return 0


@app.command("reward-dist")
def reward_dist(
    i: int = typer.Option(..., "--i", min=0, help="Initial state."),
    grid: str = GRID_OPTION,
    cdf: bool = typer.Option(False, "--cdf/--no-cdf", help="Emit the distribution function."),
    density: bool = typer.Option(False, "--density/--no-density", help="Emit the density."),
    lower: Optional[int] = LOWER_OPTION,
    upper: Optional[int] = UPPER_OPTION,
    model: Optional[Path] = MODEL_OPTION,
    kind: Optional[str] = KIND_OPTION,
    param: Optional[List[str]] = PARAM_OPTION,
    gamma: Optional[float] = GAMMA_OPTION,
    tol: Optional[float] = TOL_OPTION,
    out: Optional[Path] = OUT_OPTION,
) -> int:
    """
    Distribution of the reward integral accumulated until the taboo set is hit.

    The CDF is emitted unless only --density is requested.
    """
    bdp = _load_model(model, kind, param)
    taboo, points, plan = _taboo(lower, upper), parse_grid(grid), _plan(gamma, tol)
    curves = []
    if cdf or not density:
        curves.append(reward_cdf(bdp, i, points, plan, taboo))
    if density:
        curves.append(reward_density(bdp, i, points, plan, taboo))
    curve = _distribution(curves)
    _report(curve)
    if curve.total_mass is not None:
        typer.echo(f"total mass: {curve.total_mass:.12g}", err=True)
    _emit(curve_to_csv(curve), out)
    return 0


@app.command()
def explosive(
    terms: int = typer.Option(10_000, "--terms", min=2, help="Partial-sum length of the test."),
    model: Optional[Path] = MODEL_OPTION,
    kind: Optional[str] = KIND_OPTION,
    param: Optional[List[str]] = PARAM_OPTION,
    out: Optional[Path] = OUT_OPTION,
) -> int:
    """
    Decide whether the process reaches infinity in finite expected time.
    """
    report = explosion_check(_load_model(model, kind, param), terms=terms)
    _emit(to_json(report.to_dict()), out)
    return 0


@app.command()
def simulate(
    i: int = typer.Option(..., "--i", min=0, help="Initial state."),
    paths: int = typer.Option(1000, "--paths", min=1, help="Number of simulated paths."),
    seed: int = typer.Option(0, "--seed", help="Base seed; path k uses the stream (seed, k)."),
    threads: int = THREADS_OPTION,
    horizon: Optional[float] = typer.Option(None, "--horizon", help="Censor paths at this time."),
    cost_horizon: Optional[float] = typer.Option(None, "--cost-horizon", help="Censor paths at this reward."),
    grid: Optional[str] = typer.Option(None, "--grid", help="Emit the empirical CDF on start:stop:step."),
    quantity: Quantity = typer.Option(Quantity.REWARD, "--quantity", help="Sampled quantity."),
    dump: Optional[Path] = typer.Option(None, "--dump", help="Write every path as CSV to this file."),
    lower: Optional[int] = LOWER_OPTION,
    upper: Optional[int] = UPPER_OPTION,
    model: Optional[Path] = MODEL_OPTION,
    kind: Optional[str] = KIND_OPTION,
    param: Optional[List[str]] = PARAM_OPTION,
    out: Optional[Path] = OUT_OPTION,
) -> int:
    """
    Monte-Carlo paths: an empirical CDF with --grid, otherwise a JSON summary.
    """
    bdp = _load_model(model, kind, param)
    samples = simulate_many(bdp, i, _taboo(lower, upper), paths, seed, horizon, cost_horizon, threads)
    if dump is not None:
        write_paths_csv(samples, dump)

    if grid is not None:
        curve = empirical_cdf(samples, parse_grid(grid), quantity.value)
        if curve.flags["censored_fraction"]:
            typer.echo(f"censored fraction: {curve.flags['censored_fraction']:.12g}", err=True)
        _emit(curve_to_csv(curve), out)
        return 0

    finished = [sample.quantity(quantity.value) for sample in samples if not sample.censored]
    absorbed: Dict[str, int] = {}
    for sample in samples:
        if sample.absorbed_at is not None:
            absorbed[str(sample.absorbed_at)] = absorbed.get(str(sample.absorbed_at), 0) + 1
    summary = {
        "paths": paths,
        "seed": seed,
        "quantity": quantity.value,
        "censored": paths - len(finished),
        "absorbed_at": absorbed,
        "mean": float(np.mean(finished)) if finished else None,
        "std": float(np.std(finished, ddof=1)) if len(finished) > 1 else None,
    }
    _emit(to_json(summary), out)
    return 0


def _finish_search(kind: str, params: Dict[str, Any], result: SearchResult, record: bool, out: Optional[Path]) -> int:
    payload = result.to_dict()
    if record:
        outcome = {key: value for key, value in payload.items() if key != "probes"}
        payload["run_id"] = get_run_recorder().record(kind, params, outcome, payload["probes"], source="cli")
    _emit(to_json(payload), out)
    if not result.feasible:
        raise InfeasibleSearchError(f"{kind}: no parameter in the searched range meets the constraint.")
    return 0


@app.command("search-control")
def search_control(
    N: int = typer.Option(100, "--N", min=1, help="Population size."),
    lam: float = typer.Option(0.1, "--lambda", help="Infection rate."),
    mu: float = typer.Option(8.0, "--mu", help="Recovery rate without control."),
    a: float = typer.Option(0.0, "--a", help="Cost per unit of control effort per unit time."),
    b: float = typer.Option(0.3, "--b", help="Cost per infected individual."),
    i: int = typer.Option(50, "--i", min=1, help="Initially infected."),
    C: float = typer.Option(7.0, "--C", help="Cost bound."),
    alpha: float = typer.Option(0.05, "--alpha", help="Allowed probability of exceeding C."),
    eps_min: float = typer.Option(0.0, "--eps-min"),
    eps_max: float = typer.Option(10.0, "--eps-max"),
    step: float = typer.Option(0.5, "--step", help="Coarse grid spacing."),
    search_tol: float = typer.Option(0.01, "--search-tol", help="Final bracket width."),
    threads: int = THREADS_OPTION,
    record: bool = typer.Option(False, "--record", help="Store the run in the ledger."),
    gamma: Optional[float] = GAMMA_OPTION,
    tol: Optional[float] = TOL_OPTION,
    out: Optional[Path] = OUT_OPTION,
) -> int:
    """
    Smallest SIS control effort epsilon with Pr(W_i < C) >= 1 - alpha.
    """
    family = sis_family(N, lam, mu, a, b)
    result = min_control(
        family, i, C, alpha, (eps_min, eps_max), step=step, tol=search_tol, plan=_plan(gamma, tol), threads=threads
    )
    params = {"N": N, "lambda": lam, "mu": mu, "a": a, "b": b, "i": i, "C": C, "alpha": alpha,
              "eps_range": [eps_min, eps_max]}
    return _finish_search("search-control", params, result, record, out)


@app.command("search-strike")
def search_strike(
    lam: float = typer.Option(2.0, "--lambda", help="Per-capita birth rate."),
    mu: float = typer.Option(1.5, "--mu", help="Per-capita death rate."),
    immigration: float = typer.Option(0.3, "--immigration"),
    emigration: float = typer.Option(0.5, "--emigration"),
    lambda0: Optional[float] = typer.Option(None, "--lambda0", help="Birth rate at 0 (default: immigration)."),
    a: float = typer.Option(1.0, "--a", help="Reward coefficient of the current price level."),
    b: float = typer.Option(0.0, "--b", help="Reward coefficient of the initial price level."),
    i: int = typer.Option(10, "--i", min=0, help="Initial state."),
    R: float = typer.Option(10.0, "--R", help="Required return."),
    alpha: float = typer.Option(0.05, "--alpha", help="Allowed probability of falling short of R."),
    k_min: Optional[int] = typer.Option(None, "--k-min", help="Lowest strike (default i + 1)."),
    k_max: int = typer.Option(40, "--k-max", help="Highest strike."),
    threads: int = THREADS_OPTION,
    record: bool = typer.Option(False, "--record", help="Store the run in the ledger."),
    gamma: Optional[float] = GAMMA_OPTION,
    tol: Optional[float] = TOL_OPTION,
    out: Optional[Path] = OUT_OPTION,
) -> int:
    """
    Lowest strike k with Pr(W_i(k) > R) > 1 - alpha.
    """
    family = option_family(lam, mu, immigration, emigration, i, a=a, b=b, lambda0=lambda0)
    start = k_min if k_min is not None else i + 1
    result = min_strike(family, i, R, alpha, range(start, k_max + 1), plan=_plan(gamma, tol), threads=threads)
    params = {"lambda": lam, "mu": mu, "immigration": immigration, "emigration": emigration,
              "lambda0": lambda0, "a": a, "b": b, "i": i, "R": R, "alpha": alpha, "k_range": [start, k_max]}
    return _finish_search("search-strike", params, result, record, out)


@app.command()
def reproduce(
    figure: Figure = typer.Argument(..., help="Worked example to regenerate."),
    record: bool = typer.Option(False, "--record", help="Store the report in the ledger."),
    gamma: Optional[float] = GAMMA_OPTION,
    tol: Optional[float] = TOL_OPTION,
    out: Optional[Path] = OUT_OPTION,
) -> int:
    """
    Regenerate the data behind a worked example as a JSON report.
    """
    from bdp_integrals.workflows import reproduce_figure

    overrides = {key: value for key, value in (("gamma", gamma), ("trunc_tol", tol)) if value is not None}
    report = reproduce_figure(figure.value, record=record, plan=overrides or None)
    _emit(to_json(report), out)
    return 0


@app.command()
def history(limit: int = typer.Option(10, "--limit", min=1, help="Number of recent runs to include.")) -> int:
    """
    Show recorded runs from the ledger.
    """
    recorder = get_run_recorder()
    summary = {"kinds": recorder.kind_counts(), "recent_runs": recorder.recent_runs(limit=limit)}
    typer.echo(to_json(summary), nl=False)
    return 0


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and translate failures into exit codes."""

    args = list(argv) if argv is not None else sys.argv[1:]
    try:
        result = app(args=args, prog_name="bdp-integrals", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except InfeasibleSearchError as exc:
        typer.echo(f"error: {exc}", err=True)
        return 4
    except ModelError as exc:
        typer.echo(f"model error: {exc}", err=True)
        return 2
    except (ConvergenceError, MonotonicityError) as exc:
        typer.echo(f"numerical error: {exc}", err=True)
        return 3
    except PreconditionError as exc:
        typer.echo(f"error: {exc}", err=True)
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
