"""
Continued fractions of the form a1/(b1 + a2/(b2 + ...)).

Evaluation uses the modified Lentz method, vectorised over an array of
evaluation points, with an a-posteriori truncation bound taken from the ratio
of consecutive Wallis denominators. The raw Wallis recurrence and the stable
denominator-ratio recurrence are provided for assembling transition transforms
and for test oracles.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Tuple

import numpy as np

from bdp_integrals.errors import ConvergenceError, PreconditionError

logger = logging.getLogger(__name__)

TINY = 1e-30
# steps this small relative to the value no longer change it in double precision
_STALL = 4 * np.finfo(float).eps
_BLOCK = 1024

Term = Callable[[int], Any]


class RateTable:
    """
    Birth, death and (optionally) reward values of a model, materialised lazily
    in blocks. Growth is serialised so one table can serve several threads.
    """

    def __init__(self, model: Any, with_rewards: bool = False) -> None:
        self._model = model
        self._with_rewards = with_rewards
        self._lock = threading.Lock()
        self._arrays: Tuple[np.ndarray, np.ndarray, np.ndarray] = (np.empty(0), np.empty(0), np.empty(0))

    def _grow(self, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        arrays = self._arrays
        if n < arrays[0].size:
            return arrays
        with self._lock:
            arrays = self._arrays
            if n < arrays[0].size:
                return arrays
            size = max(_BLOCK, 2 * arrays[0].size)
            while size <= n:
                size *= 2
            ns = np.arange(arrays[0].size, size)
            rewards = self._model.rewards(ns) if self._with_rewards else np.zeros(ns.size)
            arrays = (
                np.concatenate([arrays[0], self._model.birth_rates(ns)]),
                np.concatenate([arrays[1], self._model.death_rates(ns)]),
                np.concatenate([arrays[2], rewards]),
            )
            self._arrays = arrays
        return arrays

    def lam(self, n: int) -> float:
        if n < 0:
            return 0.0
        return float(self._grow(n)[0][n])

    def mu(self, n: int) -> float:
        if n < 0:
            return 0.0
        return float(self._grow(n)[1][n])

    def reward(self, n: int) -> float:
        if not self._with_rewards:
            raise PreconditionError("This rate table was built without reward values.")
        return float(self._grow(n)[2][n])


@dataclass(frozen=True)
class ContFrac:
    """
    Partial numerators ``a(k)`` and denominators ``b(k)`` for k >= 1.

    Terms may be scalars or arrays sharing the shape of the evaluation points.
    ``length`` bounds the number of terms when the fraction terminates.
    """

    a: Term
    b: Term
    length: Optional[int] = None
    label: str = ""

    def terms(self, k: int) -> Tuple[Any, Any]:
        return self.a(k), self.b(k)

    def tail(self, start: int) -> "ContFrac":
        """The fraction a_start/(b_start + a_{start+1}/(...)) re-indexed from 1."""

        shift = start - 1
        length = None if self.length is None else max(self.length - shift, 0)
        return ContFrac(
            a=lambda k: self.a(k + shift),
            b=lambda k: self.b(k + shift),
            length=length,
            label=f"{self.label}[{start}:]",
        )

    @classmethod
    def from_terms(cls, a: Sequence[Any], b: Sequence[Any]) -> "ContFrac":
        if len(a) != len(b):
            raise PreconditionError("Partial numerators and denominators must have equal length.")
        a_terms, b_terms = list(a), list(b)
        return cls(a=lambda k: a_terms[k - 1], b=lambda k: b_terms[k - 1], length=len(a_terms), label="finite")

    @classmethod
    def periodic(cls, a: Any, b: Any) -> "ContFrac":
        return cls(a=lambda k: a, b=lambda k: b, label=f"periodic({a}, {b})")

    @classmethod
    def birth_death(cls, model: Any, s: Any, rates: RateTable | None = None) -> "ContFrac":
        """
        The fraction whose convergents give f_00(s) for a birth-death model.

        a1 = 1, ak = -lambda_{k-2} mu_{k-1}; b1 = s + lambda_0, bk = s + lambda_{k-1} + mu_{k-1}.
        A finite chain with cap N terminates after N + 1 terms.
        """

        table = rates or RateTable(model)
        s = np.asarray(s, dtype=complex)

        def a(k: int) -> float:
            if k == 1:
                return 1.0
            return -table.lam(k - 2) * table.mu(k - 1)

        def b(k: int) -> np.ndarray:
            if k == 1:
                return s + table.lam(0)
            return s + (table.lam(k - 1) + table.mu(k - 1))

        cap = getattr(model, "state_cap", None)
        return cls(a=a, b=b, length=None if cap is None else cap + 1, label="birth-death")


def floor_tiny(x: np.ndarray) -> np.ndarray:
    """Replace magnitudes below TINY by TINY, keeping the phase."""

    mag = np.abs(x)
    small = mag < TINY
    if not np.any(small):
        return x
    phase = np.where(mag > 0, x / np.where(mag > 0, mag, 1.0), 1.0)
    return np.where(small, TINY * phase, x)


def truncation_bound(D: np.ndarray, step: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    |B_k/B_{k-1}| / |Im(B_k/B_{k-1})| * |step|, with B_k/B_{k-1} = 1/D_k.

    Where the ratio is real the bound does not apply; the bare step size is used
    instead and reported as non-rigorous.
    """

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 1.0 / D
        imag = np.abs(ratio.imag)
        rigorous = imag > 0
        bound = np.where(rigorous, np.abs(ratio) / np.where(rigorous, imag, 1.0) * np.abs(step), np.abs(step))
    return bound, rigorous


@dataclass
class LentzState:
    """Running state of the modified Lentz recursion (f_k = f_{k-1} C_k D_k)."""

    value: np.ndarray
    C: np.ndarray
    D: np.ndarray
    depth: int = 0
    last_step: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=complex))

    @classmethod
    def start(cls, shape: Tuple[int, ...]) -> "LentzState":
        tiny = np.full(shape, TINY, dtype=complex)
        return cls(value=tiny, C=tiny.copy(), D=np.zeros(shape, dtype=complex), last_step=np.zeros(shape, dtype=complex))

    def advance(self, a_k: Any, b_k: Any) -> "LentzState":
        D = floor_tiny(b_k + a_k * self.D)
        C = floor_tiny(b_k + a_k / self.C)
        D = 1.0 / D
        value = self.value * C * D
        self.last_step = value - self.value
        self.value, self.C, self.D = value, C, D
        self.depth += 1
        return self


@dataclass
class LentzResult:
    value: np.ndarray
    depth: int
    err_est: np.ndarray
    rigorous: np.ndarray

    @property
    def converged_value(self) -> complex:
        return complex(np.ravel(self.value)[0])


def lentz_eval(
    cf: ContFrac,
    tol: float,
    max_depth: int = 100_000,
    *,
    shape: Tuple[int, ...] | None = None,
    min_depth: int = 2,
    raise_on_failure: bool = True,
) -> LentzResult:
    """
    Evaluate ``cf`` by the modified Lentz method until every point meets ``tol``.

    Each point is frozen at the first depth whose truncation bound is within
    ``tol``. A vanishing partial numerator or the declared ``length`` ends the
    fraction exactly, with zero truncation error.
    """

    tol = np.asarray(tol, dtype=float)
    if not np.all(tol > 0):
        raise PreconditionError(f"Tolerance must be positive, got {np.min(tol)}.")
    if shape is None:
        shape = np.broadcast_shapes(np.shape(cf.b(1)), tol.shape)
    state = LentzState.start(shape)
    value = np.zeros(shape, dtype=complex)
    err = np.full(shape, np.inf)
    rigorous = np.ones(shape, dtype=bool)
    done = np.zeros(shape, dtype=bool)

    if cf.length == 0:
        return LentzResult(value=value, depth=0, err_est=np.zeros(shape), rigorous=rigorous)

    while state.depth < max_depth:
        k = state.depth + 1
        a_k, b_k = cf.terms(k)
        if np.all(np.asarray(a_k) == 0):
            value = np.where(done, value, state.value if k > 1 else 0.0)
            err = np.where(done, err, 0.0)
            done[...] = True
            break
        state.advance(a_k, b_k)

        if cf.length is not None and state.depth >= cf.length:
            value = np.where(done, value, state.value)
            err = np.where(done, err, 0.0)
            done[...] = True
            break

        bound, exact_bound = truncation_bound(state.D, state.last_step)
        stalled = np.abs(state.last_step) <= _STALL * np.abs(state.value)
        accept = ~done & ((bound <= tol) | stalled) & (state.depth >= min_depth)
        if np.any(accept):
            value = np.where(accept, state.value, value)
            err = np.where(accept, bound, err)
            rigorous = np.where(accept, exact_bound, rigorous)
            done |= accept
        if np.all(done):
            break
    else:
        bound, exact_bound = truncation_bound(state.D, state.last_step)
        value = np.where(done, value, state.value)
        err = np.where(done, err, bound)
        rigorous = np.where(done, rigorous, exact_bound)
        if raise_on_failure:
            worst = int(np.argmax(err))
            raise ConvergenceError(
                f"Continued fraction {cf.label} did not reach tol={float(np.min(tol)):g} within depth {max_depth}",
                value=complex(np.ravel(value)[worst]),
                err_est=float(np.ravel(err)[worst]),
            )
        logger.warning("Continued fraction stopped at max depth %d with error %.3g", max_depth, float(np.max(err)))

    if not np.all(rigorous):
        logger.warning("Truncation bound unavailable at %d real evaluation point(s); using step size", int(np.sum(~rigorous)))
    logger.debug("Lentz evaluation of %s finished at depth %d", cf.label or "fraction", state.depth)
    return LentzResult(value=value, depth=state.depth, err_est=err, rigorous=rigorous)


def wallis_convergent(cf: ContFrac, k: int, dtype: Any = complex) -> Tuple[Any, Any]:
    """
    Numerator and denominator of the k-th convergent by the Wallis recurrence.

    A_0 = 0, A_1 = a_1, B_0 = 1, B_1 = b_1. The raw recurrence overflows for deep
    fractions; it is meant for small k.
    """

    if k < 0:
        raise PreconditionError(f"Convergent index must be nonnegative, got {k}.")
    A_prev, A = np.asarray(1, dtype=dtype), np.asarray(0, dtype=dtype)
    B_prev, B = np.asarray(0, dtype=dtype), np.asarray(1, dtype=dtype)
    for index in range(1, k + 1):
        a_k = np.asarray(cf.a(index), dtype=dtype)
        b_k = np.asarray(cf.b(index), dtype=dtype)
        A_prev, A = A, b_k * A + a_k * A_prev
        B_prev, B = B, b_k * B + a_k * B_prev
    return A, B


@dataclass
class RatioState:
    """Z_j = B_{m+j}/B_m carried forward by the Wallis recurrence."""

    Z: Any
    Z_prev: Any
    base_D: Any
    offset: int = 1

    @classmethod
    def start(cls, D: Any) -> "RatioState":
        return cls(Z=1.0 / D, Z_prev=np.ones_like(D), base_D=D, offset=1)

    def advance(self, cf: ContFrac, m: int) -> "RatioState":
        k = m + self.offset + 1
        a_k, b_k = cf.terms(k)
        self.Z_prev, self.Z = self.Z, b_k * self.Z + a_k * self.Z_prev
        self.offset += 1
        return self


def denominator_ratio(cf: ContFrac, m: int, j: int, D: Any) -> Any:
    """
    B_{m+j}/B_m from the Lentz quantity D = B_m/B_{m+1}.

    Z_0 = 1, Z_1 = 1/D and Z_j = b_{m+j} Z_{j-1} + a_{m+j} Z_{j-2}.
    """

    if j < 0:
        raise PreconditionError(f"Ratio offset must be nonnegative, got {j}.")
    D = np.asarray(D, dtype=complex)
    if j == 0:
        return np.ones_like(D)
    state = RatioState.start(D)
    while state.offset < j:
        state.advance(cf, m)
    return state.Z
