"""
Monotone parameter searches for probabilistic control problems.

``min_control`` finds the smallest control effort epsilon with
Pr(W_i < C) >= 1 - alpha; ``min_strike`` finds the lowest upper barrier k with
Pr(W_i(k) > R) > 1 - alpha. Every probe is recorded, and probes that contradict
the assumed monotonicity by more than three error budgets abort the search.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from bdp_integrals.core.laplace import InversionPlan
from bdp_integrals.core.modelspec import BdpModel, ModelKind, make_model
from bdp_integrals.core.reward import reward_cdf
from bdp_integrals.errors import MonotonicityError, PreconditionError

logger = logging.getLogger(__name__)

MONOTONICITY_SLACK = 3.0


@dataclass(slots=True)
class Probe:
    value: float
    probability: float
    err: float


@dataclass
class SearchResult:
    """Smallest qualifying parameter with the failing neighbour as witness."""

    value: Optional[float]
    constraint_prob: Optional[float]
    bracket: Optional[Tuple[float, float]]
    feasible: bool
    probes: List[Probe] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "constraint_prob": self.constraint_prob,
            "bracket": None if self.bracket is None else list(self.bracket),
            "feasible": self.feasible,
            "probes": [asdict(probe) for probe in self.probes],
        }


def sis_family(N: int, lam: float, mu: float, a: float, b: float) -> Callable[[float], BdpModel]:
    """epsilon -> SIS model with cost g(n) = a*epsilon + b*n."""

    def build(epsilon: float) -> BdpModel:
        return make_model(ModelKind.SIS, {"N": N, "lambda": lam, "mu": mu, "epsilon": float(epsilon), "a": a, "b": b})

    return build


def option_family(
    lam: float,
    mu: float,
    immigration: float,
    emigration: float,
    i: int,
    a: float = 1.0,
    b: float = 0.0,
    lambda0: float | None = None,
) -> Callable[[int], BdpModel]:
    """
    strike k -> option process started at i, absorbed at k, with reward
    g(n) = a*n + b*i. The default weights pay the current price level.
    """

    def build(strike: int) -> BdpModel:
        params = {
            "lambda": lam,
            "mu": mu,
            "immigration": immigration,
            "emigration": emigration,
            "strike": strike,
            "start": i,
            "a": a,
            "b": b,
        }
        if lambda0 is not None:
            params["lambda0"] = lambda0
        return make_model(ModelKind.OPTION, params)

    return build


def _probe_cdf(model: BdpModel, i: int, point: float, plan: InversionPlan | None) -> Tuple[float, float]:
    curve = reward_cdf(model, i, [point], plan)
    return float(curve.cdf[0]), float(curve.err[0])


def _run_probes(evaluate: Callable[[Any], Probe], values: Iterable[Any], threads: int) -> List[Probe]:
    values = list(values)
    if threads <= 1:
        return [evaluate(value) for value in values]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(evaluate, values))


def _audit(probes: Sequence[Probe], increasing: bool, assumption: str) -> None:
    for earlier, later in zip(probes, probes[1:]):
        change = later.probability - earlier.probability
        slack = MONOTONICITY_SLACK * max(earlier.err, later.err)
        if (increasing and change < -slack) or (not increasing and change > slack):
            raise MonotonicityError(
                f"{assumption}: probability moves from {earlier.probability:.6g} at {earlier.value:g} "
                f"to {later.probability:.6g} at {later.value:g} (slack {slack:.3g})"
            )


def min_control(
    family: Callable[[float], BdpModel],
    i: int,
    C: float,
    alpha: float,
    eps_range: Tuple[float, float] = (0.0, 10.0),
    step: float = 0.5,
    tol: float = 0.01,
    plan: InversionPlan | None = None,
    threads: int = 1,
) -> SearchResult:
    """
    Smallest epsilon in ``eps_range`` with Pr(W_i < C) >= 1 - alpha.

    A coarse grid of spacing ``step`` locates the first qualifying value, then
    bisection narrows the bracket to ``tol``. The probability is assumed to be
    continuous and nondecreasing in epsilon.
    """

    if not 0 < alpha < 1:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}.")
    if not C > 0:
        raise PreconditionError(f"Cost bound C must be positive, got {C}.")
    low, high = eps_range
    if not (np.isfinite(low) and np.isfinite(high) and low <= high):
        raise PreconditionError(f"Invalid epsilon range {eps_range}.")
    if not (step > 0 and tol > 0):
        raise PreconditionError("step and tol must be positive.")

    target = 1.0 - alpha

    def evaluate(epsilon: float) -> Probe:
        probability, err = _probe_cdf(family(epsilon), i, C, plan)
        logger.debug("Control probe epsilon=%g: Pr(W < %g) = %.6g", epsilon, C, probability)
        return Probe(float(epsilon), probability, err)

    coarse = np.arange(low, high + step / 2.0, step)
    coarse = np.minimum(coarse, high)
    probes = _run_probes(evaluate, coarse.tolist(), threads)
    _audit(probes, True, "Pr(W < C) must not decrease with epsilon")

    passing = [index for index, probe in enumerate(probes) if probe.probability >= target]
    if not passing:
        best = max(probes, key=lambda probe: probe.probability)
        logger.info("No epsilon in %s reaches probability %.4g", eps_range, target)
        return SearchResult(None, best.probability, None, False, probes)

    first = passing[0]
    if first == 0:
        hit = probes[0]
        return SearchResult(hit.value, hit.probability, None, True, probes)

    fail, hit = probes[first - 1], probes[first]
    while hit.value - fail.value > tol:
        middle = evaluate(0.5 * (fail.value + hit.value))
        probes.append(middle)
        if middle.probability >= target:
            hit = middle
        else:
            fail = middle
    _audit(sorted(probes, key=lambda probe: probe.value), True, "Pr(W < C) must not decrease with epsilon")
    return SearchResult(hit.value, hit.probability, (fail.value, fail.probability), True, probes)


def min_strike(
    family: Callable[[int], BdpModel],
    i: int,
    R: float,
    alpha: float,
    k_range: Sequence[int] | range | None = None,
    plan: InversionPlan | None = None,
    threads: int = 1,
) -> SearchResult:
    """
    Lowest strike k with Pr(W_i(k) > R) > 1 - alpha, i.e. Pr(W_i(k) < R) < alpha.

    Strikes are scanned in ascending order; a nonpositive R is met by every
    strike since W_i(k) > 0 almost surely.
    """

    if not 0 < alpha < 1:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}.")
    strikes = sorted(int(k) for k in (k_range if k_range is not None else range(i + 1, 41)))
    if not strikes:
        raise PreconditionError("The strike range is empty.")
    if strikes[0] <= i:
        raise PreconditionError(f"Strikes must exceed the initial state {i}, got {strikes[0]}.")

    def evaluate(strike: int) -> Probe:
        if R <= 0:
            return Probe(float(strike), 0.0, 0.0)
        probability, err = _probe_cdf(family(strike), i, R, plan)
        logger.debug("Strike probe k=%d: Pr(W < %g) = %.6g", strike, R, probability)
        return Probe(float(strike), probability, err)

    if threads > 1:
        probes = _run_probes(evaluate, strikes, threads)
    else:
        probes = []
        for strike in strikes:
            probes.append(evaluate(strike))
            if probes[-1].probability < alpha:
                break
    for index, probe in enumerate(probes):
        if probe.probability < alpha:
            scanned = probes[: index + 1]
            _audit(scanned, False, "Pr(W < R) must not increase with the strike")
            bracket = None if index == 0 else (scanned[-2].value, scanned[-2].probability)
            return SearchResult(int(probe.value), probe.probability, bracket, True, scanned)
    _audit(probes, False, "Pr(W < R) must not increase with the strike")
    last = probes[-1]
    logger.info("No strike in [%d, %d] meets alpha=%g", strikes[0], strikes[-1], alpha)
    return SearchResult(None, last.probability, None, False, probes)
