"""
First-passage times into barrier taboo sets, absorption probabilities and
the explosion test.

Passage into S is computed on the absorbing modification of the model: the
states of S keep no outgoing rates, so Pr(tau_i < t) is the probability of
sitting in S at time t.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import logsumexp

from bdp_integrals.core.laplace import (
    DistCurve,
    InversionPlan,
    TransformSum,
    invert_grid,
    transform_fij,
)
from bdp_integrals.core.modelspec import BdpModel, ShiftedRate, TabooSet
from bdp_integrals.errors import ModelError, PreconditionError
from bdp_integrals.settings import get_settings

logger = logging.getLogger(__name__)

DEFECT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class AbsorbedModel:
    """
    The model Y in which every state of the taboo set is absorbing.

    States are renumbered from the lower barrier (which becomes state 0) so the
    unreachable states below it drop out; an upper barrier becomes the state cap.
    """

    base: BdpModel
    taboo: TabooSet
    model: BdpModel
    offset: int
    targets: Tuple[int, ...]

    def local(self, state: int) -> int:
        return state - self.offset

    def start(self, i: int) -> int:
        self.taboo.require_start(i)
        if self.base.state_cap is not None and i > self.base.state_cap:
            raise PreconditionError(f"Initial state {i} exceeds the state cap {self.base.state_cap}.")
        return self.local(i)


def absorb(model: BdpModel, taboo: TabooSet | None = None) -> AbsorbedModel:
    taboo = taboo or model.taboo
    offset = taboo.lower or 0
    caps = [value for value in (taboo.upper, model.state_cap) if value is not None]
    cap = min(caps) - offset if caps else None
    if cap is not None and cap < 0:
        raise ModelError(f"Lower barrier {taboo.lower} lies above the state cap {model.state_cap}.")

    targets: List[int] = []
    if taboo.lower is not None:
        targets.append(0)
    if taboo.upper is not None and (model.state_cap is None or taboo.upper <= model.state_cap):
        targets.append(taboo.upper - offset)
    if not targets:
        raise ModelError(f"No barrier of {taboo.describe()} is reachable within the state cap.")
    absorbing = tuple(targets)

    derived = BdpModel(
        birth=ShiftedRate(model.birth_rates, offset, absorbing, label=f"{model.birth.label} | absorbing"),
        death=ShiftedRate(model.death_rates, offset, absorbing, label=f"{model.death.label} | absorbing"),
        taboo=TabooSet(lower=0 if taboo.lower is not None else None, upper=None if taboo.upper is None else taboo.upper - offset),
        reward=ShiftedRate(model.rewards, offset, label=model.reward.label),
        state_cap=cap,
        name=f"{model.name}|absorbed",
        params=model.params,
    )
    return AbsorbedModel(base=model, taboo=taboo, model=derived, offset=offset, targets=absorbing)


def _passage_transform(absorbed: AbsorbedModel, start: int, multiply_by_s: bool) -> TransformSum:
    parts = tuple(transform_fij(absorbed.model, start, target, multiply_by_s) for target in absorbed.targets)
    return TransformSum(parts)


def _attach_mass(curve: DistCurve, mass: Optional[float]) -> DistCurve:
    curve.total_mass = mass
    if mass is None:
        curve.warnings.append("total mass could not be determined")
    elif mass < 1.0 - DEFECT_TOLERANCE:
        curve.warnings.append(f"defective distribution: total mass {mass:.12g}")
        logger.warning("Passage distribution is defective (total mass %.6g)", mass)
    return curve


def _passage_curve(
    model: BdpModel,
    i: int,
    taboo: TabooSet | None,
    grid: Sequence[float] | np.ndarray,
    plan: InversionPlan | None,
    quantity: str,
) -> DistCurve:
    absorbed = absorb(model, taboo)
    start = absorbed.start(i)
    fn = _passage_transform(absorbed, start, multiply_by_s=quantity == "density")
    result = invert_grid(fn, grid, plan)
    curve = DistCurve.from_inversion(np.asarray(grid, dtype=float), result, quantity)
    return _attach_mass(curve, _absorption_on(absorbed, start))


def fpt_cdf(
    model: BdpModel,
    i: int,
    taboo: TabooSet | None,
    grid: Sequence[float] | np.ndarray,
    plan: InversionPlan | None = None,
) -> DistCurve:
    """Pr(tau_i < t) = sum over j in S of P_ij(t) for the absorbed model."""

    return _passage_curve(model, i, taboo, grid, plan, "cdf")


def fpt_density(
    model: BdpModel,
    i: int,
    taboo: TabooSet | None,
    grid: Sequence[float] | np.ndarray,
    plan: InversionPlan | None = None,
) -> DistCurve:
    """Density of tau_i, inverted from s times the passage transform."""

    return _passage_curve(model, i, taboo, grid, plan, "density")


def transition_curve(
    model: BdpModel, i: int, j: int, grid: Sequence[float] | np.ndarray, plan: InversionPlan | None = None
) -> DistCurve:
    """P_ij(t) of the model itself (taboo states are not made absorbing)."""

    result = invert_grid(transform_fij(model, i, j), grid, plan)
    return DistCurve.from_inversion(np.asarray(grid, dtype=float), result, "cdf")


def _finite_hitting(lam: np.ndarray, mu: np.ndarray, targets: Sequence[int], start: int) -> float:
    """Hitting probability of ``targets`` for the embedded jump chain on 0..N."""

    size = lam.size
    total = lam + mu
    ab = np.zeros((3, size))
    rhs = np.zeros(size)
    ab[1] = 1.0
    moving = total > 0
    for state in range(size):
        if state in targets or not moving[state]:
            rhs[state] = 1.0 if state in targets else 0.0
            continue
        if state + 1 < size:
            ab[0, state + 1] = -lam[state] / total[state]
        if state > 0:
            ab[2, state - 1] = -mu[state] / total[state]
    solution = solve_banded((1, 1), ab, rhs)
    return float(solution[start])


def _series_hitting(lam: np.ndarray, mu: np.ndarray, start: int) -> Optional[float]:
    """
    Pr(hit 0 | start) for an infinite chain: sum_{n>=i} rho_n / sum_{n>=0} rho_n,
    rho_n = prod_{k=1..n} mu_k/lam_k, summed in log space.
    """

    with np.errstate(divide="ignore"):
        log_ratio = np.log(mu[1:]) - np.log(lam[1:])
    log_rho = np.concatenate([[0.0], np.cumsum(log_ratio)])
    total = logsumexp(log_rho)
    last = log_rho[-1]
    if last - total < math.log(1e-13):
        return float(np.exp(logsumexp(log_rho[start:]) - total))
    if last >= log_rho[log_rho.size // 2]:
        return 1.0
    return None


def _absorption_on(absorbed: AbsorbedModel, start: int, horizon: int | None = None) -> Optional[float]:
    derived = absorbed.model
    if derived.state_cap is not None:
        ns = np.arange(derived.state_cap + 1)
        return _finite_hitting(derived.birth_rates(ns), derived.death_rates(ns), absorbed.targets, start)

    horizon = horizon or max(10 * get_settings().probe_horizon, 10 * start)
    ns = np.arange(horizon + 1)
    lam, mu = derived.birth_rates(ns), derived.death_rates(ns)
    blocked = np.flatnonzero(lam[1:] <= 0) + 1
    above = blocked[blocked >= start]
    if above.size:
        cap = int(above[0])
        return _finite_hitting(lam[: cap + 1], mu[: cap + 1], absorbed.targets, start)
    below = blocked[blocked < start]
    if below.size:
        # once under the pivot the chain cannot climb back over it
        pivot = int(below[-1])
        reach = _series_hitting(lam[pivot:], mu[pivot:], start - pivot)
        if reach is None:
            return None
        return reach * _finite_hitting(lam[: pivot + 1], mu[: pivot + 1], absorbed.targets, pivot)
    return _series_hitting(lam, mu, start)


def absorption_probability(
    model: BdpModel, i: int, taboo: TabooSet | None = None, horizon: int | None = None
) -> Optional[float]:
    """
    Probability that the taboo set is ever reached from ``i``; the limit of fpt_cdf.

    Finite chains are solved exactly; infinite chains with a lower barrier use
    the ratio series up to ``horizon`` states. Returns None when the series
    neither converges nor visibly diverges within the horizon.
    """

    absorbed = absorb(model, taboo)
    return _absorption_on(absorbed, absorbed.start(i), horizon)


class ExplosionVerdict(str, Enum):
    EXPLOSIVE = "explosive"
    NON_EXPLOSIVE = "non_explosive"
    INCONCLUSIVE = "inconclusive"


@dataclass
class ExplosionReport:
    expected_passage_to_infinity: float
    verdict: ExplosionVerdict
    partial_sum_trace: List[float] = field(default_factory=list)
    start_state: int = 0
    decay_exponent: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "expected_passage_to_infinity": self.expected_passage_to_infinity,
            "verdict": self.verdict.value,
            "partial_sum_trace": list(self.partial_sum_trace),
            "start_state": self.start_state,
            "decay_exponent": self.decay_exponent,
        }


def _rates_from(model: BdpModel, n0: int, count: int) -> Tuple[np.ndarray, np.ndarray]:
    ns = np.arange(n0, n0 + count)
    lam, mu = model.birth_rates(ns), model.death_rates(ns)
    if np.any(lam < 0) or np.any(mu < 0):
        raise ModelError("Rates must be nonnegative for the explosion test.")
    return lam, mu


def _escape_range(model: BdpModel, terms: int) -> Tuple[int, Optional[np.ndarray], Optional[np.ndarray]]:
    """
    First state above the leading run of vanishing birth rates, with the rates of
    the 2 * ``terms`` states from there. The rates are None when a birth rate
    vanishes again above that state: the chain cannot climb past it.
    """

    n0 = 0
    for _ in range(64):
        lam, mu = _rates_from(model, n0, 2 * terms)
        live = np.flatnonzero(lam > 0)
        if live.size == 0:
            n0 += 2 * terms
            continue
        if live[0] > 0:
            n0 += int(live[0])
            lam, mu = _rates_from(model, n0, 2 * terms)
        if np.any(lam <= 0):
            return n0, None, None
        return n0, lam, mu
    return n0, None, None


def explosion_check(model: BdpModel, terms: int = 10_000) -> ExplosionReport:
    """
    Decide whether the process reaches infinity in finite expected time.

    The expected time to climb from n0 to infinity is sum of m_n, with
    m_n = 1/lambda_n + (mu_n/lambda_n) m_{n-1} the expected time to step from n to
    n + 1; n0 is the first state above the leading run of vanishing birth rates
    and is treated as reflecting. A birth rate that vanishes again above n0 caps
    the chain, which is then not explosive. Otherwise the sums at ``terms`` and
    2 * ``terms`` and the power-law decay of m_n decide the verdict.
    """

    if terms < 2:
        raise PreconditionError(f"terms must be at least 2, got {terms}.")
    if model.state_cap is not None:
        return ExplosionReport(math.inf, ExplosionVerdict.NON_EXPLOSIVE, [], start_state=0)

    n0, lam, mu = _escape_range(model, terms)
    if lam is None:
        logger.debug("Births vanish above n0=%d; the process cannot escape", n0)
        return ExplosionReport(math.inf, ExplosionVerdict.NON_EXPLOSIVE, [], start_state=n0)
    crossing = np.empty(lam.size)
    previous = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for index in range(lam.size):
            previous = 1.0 / lam[index] + (mu[index] / lam[index]) * previous if index else 1.0 / lam[index]
            crossing[index] = previous
    if not np.all(np.isfinite(crossing)):
        logger.debug("Level-crossing times overflow; the process is not explosive")
        return ExplosionReport(math.inf, ExplosionVerdict.NON_EXPLOSIVE, [], start_state=n0)

    partial = np.cumsum(crossing)
    marks = sorted({max(terms // 8, 1), max(terms // 4, 1), max(terms // 2, 1), terms, 2 * terms})
    trace = [float(partial[mark - 1]) for mark in marks]
    first, second = partial[terms - 1], partial[2 * terms - 1]
    relative = (second - first) / second

    window = max(terms // 100, 1)
    early = crossing[terms - window : terms].mean()
    late = crossing[2 * terms - window : 2 * terms].mean()
    exponent = math.log(early / late) / math.log(2.0) if late > 0 and early > 0 else None
    ratio = crossing[-1] / crossing[-2]

    if relative < 1e-9:
        verdict, expected = ExplosionVerdict.EXPLOSIVE, float(second)
    elif exponent is not None and exponent >= 1.1:
        remainder = crossing[-1] * 2 * terms / (exponent - 1.0)
        verdict, expected = ExplosionVerdict.EXPLOSIVE, float(second + remainder)
    elif (exponent is not None and exponent <= 1.01) or ratio >= 1.0 - 1e-6:
        verdict, expected = ExplosionVerdict.NON_EXPLOSIVE, math.inf
    else:
        verdict, expected = ExplosionVerdict.INCONCLUSIVE, float(second)
    logger.debug("Explosion check from n0=%d: verdict %s (exponent %s)", n0, verdict.value, exponent)
    return ExplosionReport(expected, verdict, trace, start_state=n0, decay_exponent=exponent)
