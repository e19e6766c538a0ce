"""
Laplace transforms of transition probabilities and their numerical inversion.

Transforms are assembled from continued-fraction quantities without ever
forming raw Wallis denominators; inversion uses the Fourier-series (Riemann
sum) form of the Bromwich integral with Euler averaging of the alternating
tail.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.special import comb

from bdp_integrals.core.contfrac import ContFrac, RateTable, floor_tiny, lentz_eval
from bdp_integrals.errors import PreconditionError
from bdp_integrals.settings import NumericsSettings, get_settings

logger = logging.getLogger(__name__)

_SUP_POINTS = 24


@dataclass(frozen=True)
class InversionPlan:
    """Inversion parameters; ``A = gamma * ln(10)`` sets the discretization error."""

    gamma: float = 10.0
    series_terms: int = 500
    euler_terms: int = 11
    trunc_tol: Optional[float] = None
    max_extensions: int = 3
    max_depth: int = 100_000

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise PreconditionError(f"gamma must be positive, got {self.gamma}.")
        if self.series_terms < 1 or self.euler_terms < 1:
            raise PreconditionError("series_terms and euler_terms must be at least 1.")
        if self.trunc_tol is not None and not self.trunc_tol > 0:
            raise PreconditionError(f"trunc_tol must be positive, got {self.trunc_tol}.")

    @property
    def A(self) -> float:
        return self.gamma * math.log(10.0)

    @property
    def discretization_error(self) -> float:
        decay = math.exp(-self.A)
        return decay / (1.0 - decay)

    def point_tolerance(self, n_points: int) -> float:
        if self.trunc_tol is not None:
            return self.trunc_tol
        return math.exp(-self.A) / (10.0 * n_points)

    @classmethod
    def from_settings(cls, settings: NumericsSettings | None = None, **overrides: Any) -> "InversionPlan":
        settings = settings or get_settings()
        values: Dict[str, Any] = {
            "gamma": settings.gamma,
            "series_terms": settings.series_terms,
            "euler_terms": settings.euler_terms,
            "trunc_tol": settings.trunc_tol,
            "max_extensions": settings.max_extensions,
            "max_depth": settings.max_depth,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass
class TransformValues:
    value: np.ndarray
    err: np.ndarray
    rigorous: np.ndarray


class LaplaceFn(Protocol):
    """Complex-argument evaluator with per-point truncation error."""

    multiply_by_s: bool

    def evaluate(self, s: np.ndarray, tol: Any, max_depth: int = 100_000) -> TransformValues:
        """Evaluate at every point of ``s`` to within ``tol``."""


@dataclass(frozen=True)
class FunctionTransform:
    """
    A transform known in closed form; it carries no truncation error.

    ``sup_bound`` bounds |f| at the odd multiples 3t, 5t, ... of the grid points and
    scales the discretization error; 1 suits probabilities.
    """

    func: Callable[[np.ndarray], np.ndarray]
    multiply_by_s: bool = False
    sup_bound: float = 1.0

    def evaluate(self, s: np.ndarray, tol: Any = None, max_depth: int = 100_000) -> TransformValues:
        s = np.asarray(s, dtype=complex)
        value = np.asarray(self.func(s), dtype=complex)
        if self.multiply_by_s:
            value = value * s
        return TransformValues(value=value, err=np.zeros(s.shape), rigorous=np.ones(s.shape, dtype=bool))


def _log_rate_product(table: RateTable, rate: str, start: int, stop: int) -> Optional[float]:
    """Sum of log rates over [start, stop]; None when any factor vanishes."""

    getter = table.lam if rate == "lam" else table.mu
    total = 0.0
    for k in range(start, stop + 1):
        value = getter(k)
        if value <= 0.0:
            return None
        total += math.log(value)
    return total


@dataclass(frozen=True)
class TransitionTransform:
    """
    f_ij(s), or s f_ij(s) when ``multiply_by_s`` is set, for a birth-death model.

    With lo = min(i, j) and hi = max(i, j),

        f_ij(s) = P * (B_lo / B_{hi+1}) / (1 + D_{hi+1} T),

    where P is the product of mu_{j+1..i} (j <= i) or lambda_{i..j-1} (i <= j),
    D_k = B_{k-1}/B_k are the Lentz denominator ratios and T is the tail
    fraction a_{hi+2}/(b_{hi+2} + ...). The prefactor and the denominator
    ratios are accumulated as complex logarithms.
    """

    model: Any
    i: int
    j: int
    multiply_by_s: bool = False

    def __post_init__(self) -> None:
        if self.i < 0 or self.j < 0:
            raise PreconditionError(f"States must be nonnegative, got i={self.i}, j={self.j}.")
        cap = getattr(self.model, "state_cap", None)
        if cap is not None and max(self.i, self.j) > cap:
            raise PreconditionError(f"States i={self.i}, j={self.j} exceed the state cap {cap}.")

    def evaluate(self, s: np.ndarray, tol: Any, max_depth: int = 100_000) -> TransformValues:
        s = np.asarray(s, dtype=complex)
        table = RateTable(self.model)
        cf = ContFrac.birth_death(self.model, s, table)
        lo, hi = min(self.i, self.j), max(self.i, self.j)

        if self.j <= self.i:
            log_prefactor = _log_rate_product(table, "mu", self.j + 1, self.i)
        else:
            log_prefactor = _log_rate_product(table, "lam", self.i, self.j - 1)
        if log_prefactor is None:
            zeros = np.zeros(s.shape, dtype=complex)
            return TransformValues(value=zeros, err=np.zeros(s.shape), rigorous=np.ones(s.shape, dtype=bool))

        D = np.zeros(s.shape, dtype=complex)
        log_ratio = np.zeros(s.shape, dtype=complex)
        for k in range(1, hi + 2):
            a_k, b_k = cf.terms(k)
            D = 1.0 / floor_tiny(b_k + a_k * D)
            if k > lo:
                log_ratio += np.log(D)

        head = np.exp(log_prefactor + log_ratio)
        scale = np.maximum(np.abs(head * D), 1.0)
        tail = lentz_eval(cf.tail(hi + 2), np.asarray(tol, dtype=float) / scale, max_depth, shape=s.shape)
        denom = 1.0 + D * tail.value
        value = head / denom
        err = np.abs(value) * np.abs(D) * tail.err_est / np.abs(denom)

        if self.multiply_by_s:
            value = value * s
            err = err * np.abs(s)
        return TransformValues(value=value, err=err, rigorous=tail.rigorous)


def transform_fij(model: Any, i: int, j: int, multiply_by_s: bool = False) -> TransitionTransform:
    return TransitionTransform(model=model, i=i, j=j, multiply_by_s=multiply_by_s)


@dataclass(frozen=True)
class TransformSum:
    """Pointwise sum of transforms, e.g. over the states of a taboo set."""

    parts: Tuple[LaplaceFn, ...]

    @property
    def multiply_by_s(self) -> bool:
        return any(part.multiply_by_s for part in self.parts)

    def evaluate(self, s: np.ndarray, tol: Any, max_depth: int = 100_000) -> TransformValues:
        share = np.asarray(tol, dtype=float) / max(len(self.parts), 1)
        pieces = [part.evaluate(s, share, max_depth) for part in self.parts]
        return TransformValues(
            value=sum(piece.value for piece in pieces),
            err=sum(piece.err for piece in pieces),
            rigorous=np.logical_and.reduce([piece.rigorous for piece in pieces]),
        )


@dataclass
class InversionResult:
    values: np.ndarray
    err: np.ndarray
    settled: np.ndarray
    rigorous: np.ndarray
    heuristic_error: bool = False


def _euler_weights(m: int) -> np.ndarray:
    return comb(m, np.arange(m + 1)) / 2.0**m


def _fourier_series(
    fn: LaplaceFn, t: np.ndarray, plan: InversionPlan, n_terms: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    m = plan.euler_terms
    k = np.arange(n_terms + m + 1)
    A = plan.A
    s = (A + 2j * math.pi * k[None, :]) / (2.0 * t[:, None])
    tol = plan.point_tolerance(k.size)
    transform = fn.evaluate(s.ravel(), tol, plan.max_depth)
    real = transform.value.real.reshape(s.shape)
    err = transform.err.reshape(s.shape)
    rigorous = transform.rigorous.reshape(s.shape).all(axis=1)

    signs = np.where(k % 2 == 0, 1.0, -1.0)
    terms = real * signs[None, :]
    terms[:, 0] *= 0.5
    partial = np.cumsum(terms, axis=1)

    weights = _euler_weights(m)
    current = partial[:, n_terms : n_terms + m + 1] @ weights
    previous = partial[:, n_terms - 1 : n_terms + m] @ weights
    prefactor = math.exp(A / 2.0) / t
    value = prefactor * current
    tail = prefactor * np.abs(current - previous)
    trunc = prefactor * err.sum(axis=1)
    return value, trunc, tail, rigorous


def _density_sup(fn: LaplaceFn, t: np.ndarray, plan: InversionPlan) -> float:
    """
    Coarse estimate of sup |f| on [min t, 10 max t], where the discretization
    error of every grid point picks up its values.
    """

    coarse = np.geomspace(t.min(), 10.0 * t.max(), _SUP_POINTS)
    values, _, _, _ = _fourier_series(fn, coarse, plan, plan.series_terms)
    return float(np.max(np.abs(values)))


def invert_grid(fn: LaplaceFn, grid: Sequence[float] | np.ndarray, plan: InversionPlan | None = None) -> InversionResult:
    """
    Invert ``fn`` at every grid point.

    The alternating series is averaged with binomial Euler weights over the last
    ``euler_terms`` partial sums; its change between consecutive windows is the
    tail estimate. Points whose tail exceeds ten times the discretization error
    are recomputed with doubled series length, at most ``max_extensions`` times.
    """

    plan = plan or InversionPlan.from_settings()
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    if t.size == 0:
        raise PreconditionError("The evaluation grid is empty.")
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise PreconditionError("Inversion requires finite positive grid points.")

    values = np.zeros(t.shape)
    trunc = np.zeros(t.shape)
    tail = np.zeros(t.shape)
    rigorous = np.ones(t.shape, dtype=bool)
    settled = np.zeros(t.shape, dtype=bool)
    threshold = 10.0 * plan.discretization_error

    pending = np.arange(t.size)
    n_terms = plan.series_terms
    for extension in range(plan.max_extensions + 1):
        v, tr, tl, rg = _fourier_series(fn, t[pending], plan, n_terms)
        values[pending], trunc[pending], tail[pending], rigorous[pending] = v, tr, tl, rg
        ok = tl <= threshold
        settled[pending[ok]] = True
        pending = pending[~ok]
        if pending.size == 0:
            break
        logger.debug("Extending Fourier series to %d terms for %d point(s)", 2 * n_terms, pending.size)
        n_terms *= 2

    if pending.size:
        logger.warning(
            "Inversion series did not settle at %d point(s); worst tail estimate %.3g",
            pending.size,
            float(tail[pending].max()),
        )

    discretization = plan.discretization_error * getattr(fn, "sup_bound", 1.0)
    heuristic = False
    if fn.multiply_by_s:
        sup = max(float(np.max(np.abs(values))), _density_sup(fn, t, plan))
        if sup > 1.0:
            discretization *= sup
            heuristic = True
    err = discretization + trunc + tail
    return InversionResult(values=values, err=err, settled=settled, rigorous=rigorous, heuristic_error=heuristic)


def invert(fn: LaplaceFn, t: float, plan: InversionPlan | None = None) -> Tuple[float, float]:
    result = invert_grid(fn, [t], plan)
    return float(result.values[0]), float(result.err[0])


def transition_probability(
    model: Any, i: int, j: int, t: float, plan: InversionPlan | None = None
) -> Tuple[float, float]:
    """P_ij(t) with its error budget; values are not clamped to [0, 1]."""

    return invert(transform_fij(model, i, j), t, plan)


@dataclass
class DistCurve:
    """Distribution values on a grid of times or costs, with per-point error budget."""

    grid: np.ndarray
    cdf: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None
    err: np.ndarray = field(default_factory=lambda: np.zeros(0))
    flags: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    total_mass: Optional[float] = None

    @classmethod
    def from_inversion(cls, grid: np.ndarray, result: InversionResult, quantity: str) -> "DistCurve":
        flags = {
            "unsettled_points": int(np.sum(~result.settled)),
            "non_rigorous_points": int(np.sum(~result.rigorous)),
            "heuristic_density_error": result.heuristic_error,
        }
        curve = cls(grid=np.asarray(grid, dtype=float), err=result.err, flags=flags)
        setattr(curve, quantity, result.values)
        if flags["unsettled_points"]:
            curve.warnings.append(f"series did not settle at {flags['unsettled_points']} point(s)")
        if result.heuristic_error:
            curve.warnings.append("density error budget scaled by a sup estimate (heuristic)")
        return curve

    def merge(self, other: "DistCurve") -> "DistCurve":
        """Combine a CDF curve and a density curve on the same grid."""

        if not np.array_equal(self.grid, other.grid):
            raise PreconditionError("Curves must share a grid to be merged.")
        flags = dict(self.flags)
        for key, value in other.flags.items():
            if isinstance(value, bool):
                flags[key] = value or bool(flags.get(key, False))
            else:
                flags[key] = max(value, flags.get(key, 0))
        return DistCurve(
            grid=self.grid,
            cdf=self.cdf if self.cdf is not None else other.cdf,
            density=self.density if self.density is not None else other.density,
            err=np.maximum(self.err, other.err),
            flags=flags,
            warnings=list(dict.fromkeys(self.warnings + other.warnings)),
            total_mass=self.total_mass if self.total_mass is not None else other.total_mass,
        )

    def to_rows(self) -> List[Tuple[float, Optional[float], Optional[float], float]]:
        rows = []
        for index, x in enumerate(self.grid):
            cdf = None if self.cdf is None else float(self.cdf[index])
            density = None if self.density is None else float(self.density[index])
            rows.append((float(x), cdf, density, float(self.err[index])))
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid": self.grid.tolist(),
            "cdf": None if self.cdf is None else self.cdf.tolist(),
            "density": None if self.density is None else self.density.tolist(),
            "err": self.err.tolist(),
            "flags": dict(self.flags),
            "warnings": list(self.warnings),
            "total_mass": self.total_mass,
        }


def make_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Points start, start + step, ... up to stop inclusive, rounded to 12 significant digits."""

    if not (step > 0 and start > 0 and stop >= start):
        raise PreconditionError(f"Invalid grid {start}:{stop}:{step}; need 0 < start <= stop and step > 0.")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    points = start + step * np.arange(count)
    return np.array([float(f"{point:.12g}") for point in points])


def parse_grid(text: str) -> np.ndarray:
    """Parse ``start:stop:step`` into grid points."""

    parts = text.split(":")
    if len(parts) != 3:
        raise PreconditionError(f"Grid '{text}' must have the form start:stop:step.")
    try:
        start, stop, step = (float(part) for part in parts)
    except ValueError as exc:
        raise PreconditionError(f"Grid '{text}' contains a non-numeric bound.") from exc
    return make_grid(start, stop, step)
