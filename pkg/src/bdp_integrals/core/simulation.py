"""
Exact (Gillespie) simulation of birth-death paths and their reward integrals.

Each path draws from its own generator seeded by (seed, path_index), so a
batch is reproducible whatever the number of worker threads.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from bdp_integrals.core.contfrac import RateTable
from bdp_integrals.core.laplace import DistCurve
from bdp_integrals.core.modelspec import BdpModel, TabooSet
from bdp_integrals.errors import PreconditionError

logger = logging.getLogger(__name__)

MAX_JUMPS = 1_000_000
# 95% Dvoretzky-Kiefer-Wolfowitz band
_DKW_LEVEL = 0.05


@dataclass(slots=True)
class PathSample:
    jump_times: List[float]
    states: List[int]
    reward_integral: float
    passage_time: float
    absorbed_at: Optional[int]
    censored: bool

    def quantity(self, name: str) -> float:
        if name == "reward":
            return self.reward_integral
        if name == "time":
            return self.passage_time
        raise PreconditionError(f"Unknown sample quantity '{name}'; expected 'reward' or 'time'.")


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path_index,)))


def simulate(
    model: BdpModel,
    i: int,
    taboo: TabooSet | None = None,
    seed: int = 0,
    horizon: float | None = None,
    cost_horizon: float | None = None,
    *,
    path_index: int = 0,
    rates: RateTable | None = None,
    max_jumps: int = MAX_JUMPS,
) -> PathSample:
    """
    Simulate one path from ``i`` until it enters the taboo set.

    The path is censored when the time ``horizon``, the reward ``cost_horizon`` or
    ``max_jumps`` is reached first; the integrals then stop at the horizon.
    """

    taboo = taboo or model.taboo
    taboo.require_start(i)
    rates = rates or RateTable(model, with_rewards=True)
    rng = path_rng(seed, path_index)
    targets = taboo.targets

    state, clock, reward = i, 0.0, 0.0
    jump_times: List[float] = []
    states = [i]

    while True:
        lam, mu, g = rates.lam(state), rates.mu(state), rates.reward(state)
        total = lam + mu
        if total <= 0:
            remaining = _remaining(clock, reward, g, horizon, cost_horizon)
            if math.isinf(remaining):
                raise PreconditionError(f"trapped state {state}: no way out and no horizon set")
            return PathSample(jump_times, states, reward + g * remaining, clock + remaining, None, True)

        hold = rng.exponential(1.0 / total)
        remaining = _remaining(clock, reward, g, horizon, cost_horizon)
        if hold >= remaining:
            return PathSample(jump_times, states, reward + g * remaining, clock + remaining, None, True)

        clock += hold
        reward += g * hold
        state += 1 if rng.random() < lam / total else -1
        jump_times.append(clock)
        states.append(state)
        if state in targets:
            return PathSample(jump_times, states, reward, clock, state, False)
        if len(jump_times) >= max_jumps:
            logger.warning("Path %d censored after %d jumps", path_index, max_jumps)
            return PathSample(jump_times, states, reward, clock, None, True)


def _remaining(clock: float, reward: float, g: float, horizon: float | None, cost_horizon: float | None) -> float:
    remaining = math.inf
    if horizon is not None:
        remaining = min(remaining, horizon - clock)
    if cost_horizon is not None and g > 0:
        remaining = min(remaining, (cost_horizon - reward) / g)
    return max(remaining, 0.0)


def simulate_many(
    model: BdpModel,
    i: int,
    taboo: TabooSet | None = None,
    n_paths: int = 1000,
    seed: int = 0,
    horizon: float | None = None,
    cost_horizon: float | None = None,
    threads: int = 1,
) -> List[PathSample]:
    """Simulate ``n_paths`` paths; the list is in path-index order."""

    if n_paths < 1:
        raise PreconditionError(f"n_paths must be positive, got {n_paths}.")
    rates = RateTable(model, with_rewards=True)

    def one(index: int) -> PathSample:
        return simulate(model, i, taboo, seed, horizon, cost_horizon, path_index=index, rates=rates)

    if threads <= 1:
        samples = [one(index) for index in range(n_paths)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            samples = list(executor.map(one, range(n_paths)))
    censored = sum(sample.censored for sample in samples)
    logger.debug("Simulated %d paths (%d censored) with seed %d", n_paths, censored, seed)
    return samples


def empirical_cdf(samples: Sequence[PathSample], grid: Sequence[float] | np.ndarray, quantity: str = "reward") -> DistCurve:
    """
    ECDF of the reward integral (or passage time) over all samples.

    Censored samples only count as exceeding the horizon; their share is reported
    in the flags. The error column is the 95% DKW band.
    """

    grid = np.asarray(grid, dtype=float)
    uncensored = np.array([sample.quantity(quantity) for sample in samples if not sample.censored])
    if uncensored.size == 0:
        raise PreconditionError("empty sample set: no uncensored samples")
    total = len(samples)
    ordered = np.sort(uncensored)
    cdf = np.searchsorted(ordered, grid, side="right") / total
    band = math.sqrt(math.log(2.0 / _DKW_LEVEL) / (2.0 * total))
    flags = {"samples": total, "censored_fraction": (total - uncensored.size) / total}
    return DistCurve(grid=grid, cdf=cdf, err=np.full(grid.shape, band), flags=flags)


def ks_distance(curve_a: DistCurve, curve_b: DistCurve) -> float:
    if curve_a.cdf is None or curve_b.cdf is None:
        raise PreconditionError("KS distance needs two CDF curves.")
    if not np.allclose(curve_a.grid, curve_b.grid, rtol=0.0, atol=1e-12):
        raise PreconditionError("KS distance needs curves on a common grid.")
    return float(np.max(np.abs(curve_a.cdf - curve_b.cdf)))


def write_paths_csv(samples: Sequence[PathSample], path: str | Path) -> Path:
    """Dump paths as ``path_id,jump_time,state`` rows; the initial state sits at time 0."""

    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["path_id", "jump_time", "state"])
        for path_id, sample in enumerate(samples):
            writer.writerow([path_id, "0", sample.states[0]])
            for time, state in zip(sample.jump_times, sample.states[1:]):
                writer.writerow([path_id, f"{time:.12g}", state])
    return path
