"""
Distributions of the accumulated reward W_i = integral of g(X(t)) up to the
first passage into the taboo set.

Dividing every rate off the taboo set by g turns W_i into the first-passage
time of a modified chain, so the passage machinery does the rest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ive

from bdp_integrals.core.laplace import DistCurve, InversionPlan
from bdp_integrals.core.modelspec import BdpModel, TabooSet, constant_rate
from bdp_integrals.core.passage import (
    ExplosionVerdict,
    absorb,
    absorption_probability,
    explosion_check,
    fpt_cdf,
    fpt_density,
)
from bdp_integrals.errors import ModelError, PreconditionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuotientRate:
    """rate(n) / g(n) off the taboo states, zero on them and on ``silenced``."""

    rate: Callable[[np.ndarray], np.ndarray]
    reward: Callable[[np.ndarray], np.ndarray]
    taboo_states: Tuple[int, ...]
    label: str = ""
    silenced: Tuple[int, ...] = ()

    def __call__(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        rates = np.asarray(self.rate(ns), dtype=float)
        g = np.asarray(self.reward(ns), dtype=float)
        zeroed = np.isin(ns, self.taboo_states + self.silenced)
        # unreachable states with g <= 0 keep their base rate
        divisor = np.where(zeroed | (g <= 0), 1.0, g)
        return np.where(zeroed, 0.0, rates / divisor)


@dataclass
class RewardModel:
    """A base model together with its rate-modified counterpart."""

    base: BdpModel
    taboo: TabooSet
    modified: BdpModel
    warnings: List[str] = field(default_factory=list)
    folded_zero: bool = False
    _mass: dict = field(default_factory=dict, repr=False)

    def entry(self, i: int) -> int:
        """Start of the modified chain; a folded state 0 is left at once for 1."""

        return 1 if self.folded_zero and i == 0 else i

    def total_mass(self, i: int) -> Optional[float]:
        """Pr(W_i < infinity), the absorption probability of the modified chain."""

        start = self.entry(i)
        if start not in self._mass:
            self._mass[start] = absorption_probability(self.modified, start, self.taboo)
        return self._mass[start]


def _reachable_states(model: BdpModel, taboo: TabooSet) -> np.ndarray:
    low = 0 if taboo.lower is None else taboo.lower + 1
    high = model.probe_limit() if taboo.upper is None else taboo.upper - 1
    if model.state_cap is not None:
        high = min(high, model.state_cap)
    return np.arange(low, high + 1)


def _folds_zero(model: BdpModel, states: np.ndarray, g: np.ndarray) -> bool:
    """
    True when state 0 earns nothing but is only ever left upwards: every visit
    returns to 1 at no cost, so deaths at 1 vanish from the modified chain.
    """

    if states.size < 2 or states[0] != 0 or g[0] != 0:
        return False
    edge = np.array([0])
    return bool(model.birth_rates(edge)[0] > 0 and model.death_rates(edge)[0] == 0)


def build_reward_model(model: BdpModel, taboo: TabooSet | None = None, check_explosion: bool = True) -> RewardModel:
    """
    Validate g > 0 on the reachable non-taboo states and build the modified chain.

    The one state allowed to earn nothing is a reflecting state 0, which is folded
    into state 1. An explosive modified chain only produces a warning, since the
    resulting defective distribution is still meaningful.
    """

    taboo = taboo or model.taboo
    states = _reachable_states(model, taboo)
    g = model.rewards(states)
    folded = _folds_zero(model, states, g)
    checked = slice(1, None) if folded else slice(None)
    bad = np.flatnonzero(~(g[checked] > 0))
    if bad.size:
        n = int(states[checked][bad[0]])
        raise ModelError(f"Reward g must be positive off the taboo set; g({n}) = {g[checked][bad[0]]:g}.")
    if folded:
        logger.info("g(0) = 0 on a reflecting state 0; folding it into state 1 (%s)", model.name)

    targets = taboo.targets
    modified = BdpModel(
        birth=QuotientRate(model.birth_rates, model.rewards, targets, label=f"({model.birth.label})/g"),
        death=QuotientRate(
            model.death_rates,
            model.rewards,
            targets,
            label=f"({model.death.label})/g",
            silenced=(1,) if folded else (),
        ),
        taboo=taboo,
        reward=constant_rate(1.0),
        state_cap=model.state_cap,
        name=f"{model.name}|reward",
        params=model.params,
    )
    reward_model = RewardModel(base=model, taboo=taboo, modified=modified, folded_zero=folded)

    if check_explosion:
        report = explosion_check(absorb(modified, taboo).model)
        if report.verdict is ExplosionVerdict.EXPLOSIVE:
            message = "modified process is explosive; the reward distribution may be defective"
            reward_model.warnings.append(message)
            logger.warning("%s (%s)", message, model.name)
    return reward_model


def _finish(curve: DistCurve, reward_model: RewardModel) -> DistCurve:
    curve.warnings = list(dict.fromkeys(reward_model.warnings + curve.warnings))
    return curve


def reward_cdf(
    model: BdpModel,
    i: int,
    grid: Sequence[float] | np.ndarray,
    plan: InversionPlan | None = None,
    taboo: TabooSet | None = None,
) -> DistCurve:
    """Pr(W_i < w) over the cost grid; ``total_mass`` carries the defect, if any."""

    reward_model = build_reward_model(model, taboo)
    curve = fpt_cdf(reward_model.modified, reward_model.entry(i), reward_model.taboo, grid, plan)
    return _finish(curve, reward_model)


def reward_density(
    model: BdpModel,
    i: int,
    grid: Sequence[float] | np.ndarray,
    plan: InversionPlan | None = None,
    taboo: TabooSet | None = None,
) -> DistCurve:
    reward_model = build_reward_model(model, taboo)
    curve = fpt_density(reward_model.modified, reward_model.entry(i), reward_model.taboo, grid, plan)
    return _finish(curve, reward_model)


def kendall_reference_density(lam: float, mu: float, i: int, w: float | np.ndarray) -> float | np.ndarray:
    """
    Closed-form density of W_i for the linear birth-death process with g(n) = n:

        (i/w) exp(-(lam+mu) w) (mu/lam)^(i/2) I_i(2 w sqrt(lam mu)).

    The exponentially scaled Bessel function keeps large w finite.
    """

    if not (lam > 0 and mu > 0):
        raise PreconditionError("Kendall reference density needs lam > 0 and mu > 0.")
    if i < 1:
        raise PreconditionError(f"Initial state must be at least 1, got {i}.")
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr <= 0):
        raise PreconditionError("Kendall reference density is defined for w > 0.")
    x = 2.0 * w_arr * math.sqrt(lam * mu)
    log_scale = 0.5 * i * math.log(mu / lam)
    density = (i / w_arr) * ive(i, x) * np.exp(x - (lam + mu) * w_arr + log_scale)
    return float(density) if np.ndim(density) == 0 else density
