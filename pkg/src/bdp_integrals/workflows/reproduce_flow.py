"""
Prefect workflows regenerating the data behind the worked examples.

Every curve is computed in its own task; tasks take JSON-safe arguments only
and reports are assembled in submission order, so output is deterministic.
"""

from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from prefect import flow, task

from bdp_integrals.core.laplace import InversionPlan, make_grid
from bdp_integrals.core.modelspec import make_model
from bdp_integrals.core.reward import kendall_reference_density, reward_cdf, reward_density
from bdp_integrals.core.search import min_control, min_strike, option_family, sis_family
from bdp_integrals.errors import PreconditionError
from bdp_integrals.ledger import get_run_recorder

logger = logging.getLogger(__name__)

GridSpec = Tuple[float, float, float]

FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6")

KENDALL = {"lambda": 0.1, "mu": 0.5}
QUEUE = {"lambda": 2.0, "mu": 1.0}
MORAN = {"N": 50, "fitness_1": 0.5, "fitness_2": 1.0, "u": 0.0}
# the return is the time integral of the price level, g(n) = n
OPTION = {"lambda": 2.0, "mu": 1.5, "immigration": 0.3, "emigration": 0.5, "a": 1.0, "b": 0.0}
# the cost is charged per infected individual; FLAT_CONTROL_CHARGE adds a*epsilon per unit time
SIS = {"N": 100, "lambda": 0.1, "mu": 8.0, "a": 0.0, "b": 0.3}
FLAT_CONTROL_CHARGE = 0.1


def _plan(overrides: Optional[Dict[str, Any]]) -> InversionPlan:
    return InversionPlan.from_settings(**(overrides or {}))


@task(name="reward-curve")
def reward_curve(
    kind: str,
    params: Dict[str, float],
    i: int,
    grid: GridSpec,
    quantity: str,
    plan: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    model = make_model(kind, params)
    points = make_grid(*grid)
    compute = reward_density if quantity == "density" else reward_cdf
    curve = compute(model, i, points, _plan(plan))
    return {"params": dict(params), "i": i, **curve.to_dict()}


@task(name="control-search")
def control_search(
    i: int,
    C: float,
    alpha: float,
    eps_range: Tuple[float, float],
    a: float,
    plan: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    family = sis_family(SIS["N"], SIS["lambda"], SIS["mu"], a, SIS["b"])
    return min_control(family, i, C, alpha, eps_range, plan=_plan(plan)).to_dict()


@task(name="strike-search")
def strike_search(
    i: int, R: float, alpha: float, k_max: int, plan: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    family = option_family(
        OPTION["lambda"], OPTION["mu"], OPTION["immigration"], OPTION["emigration"], i, a=OPTION["a"], b=OPTION["b"]
    )
    return min_strike(family, i, R, alpha, range(i + 1, k_max + 1), plan=_plan(plan)).to_dict()


def _budget(curves: List[Dict[str, Any]]) -> Dict[str, float]:
    return {curve["label"]: max(curve["err"]) for curve in curves}


def _collect(futures: List[Tuple[str, Any]]) -> List[Dict[str, Any]]:
    curves = []
    for label, future in futures:
        curve = future.result()
        curve["label"] = label
        curves.append(curve)
    return curves


@flow(name="reproduce-fig2")
def fig2(plan: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Kendall process, g(n) = n: pipeline densities against the Bessel closed form."""

    grid = (0.1, 30.0, 0.1)
    futures = [
        (f"i={i}", reward_curve.submit("kendall", KENDALL, i, grid, "density", plan)) for i in range(1, 6)
    ]
    curves = _collect(futures)
    deviations = {}
    for curve in curves:
        reference = kendall_reference_density(KENDALL["lambda"], KENDALL["mu"], curve["i"], np.asarray(curve["grid"]))
        curve["reference"] = reference.tolist()
        deviations[curve["label"]] = float(np.max(np.abs(np.asarray(curve["density"]) - reference)))
    return {
        "figure": "fig2",
        "params": {**KENDALL, "reward": "n", "i": [1, 2, 3, 4, 5], "grid": list(grid)},
        "curves": curves,
        "result": {"max_abs_deviation": deviations},
        "error_budget": _budget(curves),
    }


@flow(name="reproduce-fig3")
def fig3(plan: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Total waiting time in M/M/infinity and M/M/c queues started with 7 customers."""

    grid = (0.5, 60.0, 0.5)
    variants: List[Tuple[str, Dict[str, float]]] = [("M/M/inf", dict(QUEUE))]
    variants += [(f"M/M/{c}", {**QUEUE, "c": c}) for c in (5, 4, 3, 2, 1)]
    futures = [(label, reward_curve.submit("mm_queue", params, 7, grid, "density", plan)) for label, params in variants]
    curves = _collect(futures)
    return {
        "figure": "fig3",
        "params": {**QUEUE, "i": 7, "servers": ["inf", 5, 4, 3, 2, 1], "reward": "n", "grid": list(grid)},
        "curves": curves,
        "result": {"total_mass": {curve["label"]: curve["total_mass"] for curve in curves}},
        "error_budget": _budget(curves),
    }


@flow(name="reproduce-fig4")
def fig4(plan: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Organism-time lived with allele A1 until its extinction, for mutation v = 0.01..0.05."""

    grid = (0.5, 50.0, 0.5)
    values = (0.01, 0.02, 0.03, 0.04, 0.05)
    futures = [
        (f"v={v:g}", reward_curve.submit("moran", {**MORAN, "v": v}, 25, grid, "density", plan)) for v in values
    ]
    curves = _collect(futures)
    return {
        "figure": "fig4",
        "params": {**MORAN, "v": list(values), "i": 25, "reward": "n", "grid": list(grid)},
        "curves": curves,
        "result": {"total_mass": {curve["label"]: curve["total_mass"] for curve in curves}},
        "error_budget": _budget(curves),
    }


@flow(name="reproduce-fig5")
def fig5(plan: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Perpetual integral option: return distributions for k = 11..21 and the lowest strike."""

    i, R, alpha, k_max = 10, 10.0, 0.05, 40
    grid = (0.25, 30.0, 0.25)
    params = {**OPTION, "start": i}
    logger.info("Option return g(n) = %g*n + %g*%d", OPTION["a"], OPTION["b"], i)
    futures = [
        (f"k={k}", reward_curve.submit("option", {**params, "strike": k}, i, grid, "cdf", plan)) for k in range(11, 22)
    ]
    search = strike_search.submit(i, R, alpha, k_max, plan)
    curves = _collect(futures)
    outcome = search.result()
    return {
        "figure": "fig5",
        "params": {**params, "R": R, "alpha": alpha, "strikes": [11, k_max], "grid": list(grid)},
        "curves": curves,
        "result": {"strike": outcome["value"], "search": outcome},
        "error_budget": _budget(curves),
    }


@flow(name="reproduce-fig6")
def fig6(plan: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """SIS epidemic: cost distributions for several controls and the minimal control."""

    i, C, alpha = 50, 7.0, 0.05
    grid = (0.1, 15.0, 0.1)
    controls = (0.0, 0.5, 1.0, 1.5, 2.0)
    futures = [
        (f"epsilon={eps:g}", reward_curve.submit("sis", {**SIS, "epsilon": eps}, i, grid, "cdf", plan))
        for eps in controls
    ]
    search = control_search.submit(i, C, alpha, (0.0, 10.0), SIS["a"], plan)
    flat = control_search.submit(i, C, alpha, (0.0, 10.0), FLAT_CONTROL_CHARGE, plan)
    curves = _collect(futures)
    outcome = search.result()
    flat_outcome = flat.result()
    return {
        "figure": "fig6",
        "params": {
            **SIS,
            "i": i,
            "C": C,
            "alpha": alpha,
            "epsilon": list(controls),
            "flat_control_charge": FLAT_CONTROL_CHARGE,
            "grid": list(grid),
        },
        "curves": curves,
        "result": {
            "epsilon_star": outcome["value"],
            "epsilon_star_flat_charge": flat_outcome["value"],
            "search": outcome,
        },
        "error_budget": _budget(curves),
    }


_FLOWS = {"fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6}


@flow(name="bdp-reproduce")
def reproduce_figure(figure: str, record: bool = False, plan: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    if figure not in _FLOWS:
        raise PreconditionError(f"Unknown figure '{figure}'; expected one of {', '.join(FIGURES)}.")
    report = _FLOWS[figure](plan)

    if record:
        search = report["result"].get("search") or {}
        recorder = get_run_recorder()
        recorder.record(
            f"reproduce-{figure}",
            report["params"],
            {key: value for key, value in report["result"].items() if key != "search"},
            search.get("probes", []),
            source="workflow",
        )
    return report
