"""
General birth-death process models: rates, taboo barriers and reward functions.

Rates are exposed to the rest of the package as total, vectorised functions of
the state index; whether a rate is backed by a formula, a table or a parsed
expression is invisible downstream.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Mapping, Optional, Protocol, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from bdp_integrals.core.expressions import parse_rate_expr
from bdp_integrals.errors import ModelError, PreconditionError
from bdp_integrals.settings import get_settings

logger = logging.getLogger(__name__)


class RateFunction(Protocol):
    """Vectorised nonnegative rate over integer states."""

    label: str

    def __call__(self, ns: np.ndarray) -> np.ndarray:
        """Return the rate at each state in ``ns``."""


@dataclass(frozen=True)
class FormulaRate:
    func: Callable[[np.ndarray], np.ndarray]
    label: str

    def __call__(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=float)
        return np.broadcast_to(np.asarray(self.func(ns), dtype=float), ns.shape).copy()


@dataclass(frozen=True)
class TableRate:
    values: Tuple[float, ...]
    label: str = "table"

    def __call__(self, ns: np.ndarray) -> np.ndarray:
        idx = np.asarray(ns, dtype=np.int64)
        table = np.asarray(self.values, dtype=float)
        inside = (idx >= 0) & (idx < table.size)
        out = np.zeros(idx.shape, dtype=float)
        out[inside] = table[idx[inside]]
        return out


@dataclass(frozen=True)
class ExpressionRate:
    source: str
    params: Mapping[str, float]
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "_expr", parse_rate_expr(self.source, self.params))
        if not self.label:
            object.__setattr__(self, "label", self.source)

    def __call__(self, ns: np.ndarray) -> np.ndarray:
        return self._expr.values(np.asarray(ns, dtype=float))


@dataclass(frozen=True)
class ShiftedRate:
    """``inner`` read ``offset`` states higher, forced to zero on ``absorbing`` states."""

    inner: Callable[[np.ndarray], np.ndarray]
    offset: int = 0
    absorbing: Tuple[int, ...] = ()
    label: str = ""

    def __call__(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        rates = np.asarray(self.inner(ns + self.offset), dtype=float)
        if self.absorbing:
            rates = np.where(np.isin(ns, self.absorbing), 0.0, rates)
        return rates


def constant_rate(value: float) -> FormulaRate:
    return FormulaRate(lambda ns: np.full(ns.shape, float(value)), label=f"{value:g}")


@dataclass(frozen=True, slots=True)
class TabooSet:
    """Absorbing barriers: a lower state ``a``, an upper state ``b``, or both."""

    lower: Optional[int] = None
    upper: Optional[int] = None

    def __post_init__(self) -> None:
        if self.lower is None and self.upper is None:
            raise ModelError("A taboo set needs at least one barrier.")
        for value in (self.lower, self.upper):
            if value is not None and value < 0:
                raise ModelError(f"Barrier states must be nonnegative, got {value}.")
        if self.lower is not None and self.upper is not None and self.lower >= self.upper:
            raise ModelError(f"Lower barrier {self.lower} must be below upper barrier {self.upper}.")

    @property
    def targets(self) -> Tuple[int, ...]:
        return tuple(value for value in (self.lower, self.upper) if value is not None)

    def __contains__(self, state: int) -> bool:
        return state in self.targets

    def admits(self, state: int) -> bool:
        above = self.lower is None or state > self.lower
        below = self.upper is None or state < self.upper
        return above and below

    def require_start(self, state: int) -> None:
        if not self.admits(state):
            raise PreconditionError(
                f"Initial state {state} must lie strictly between the barriers {self.describe()}."
            )

    def describe(self) -> Dict[str, int]:
        return {key: value for key, value in (("lower", self.lower), ("upper", self.upper)) if value is not None}


@dataclass(frozen=True)
class BdpModel:
    """
    A general birth-death process with taboo barriers and a reward function.

    ``state_cap`` = N declares a finite chain: the birth rate vanishes from N on and
    every rate vanishes above N.
    """

    birth: RateFunction
    death: RateFunction
    taboo: TabooSet
    reward: RateFunction = field(default_factory=lambda: constant_rate(1.0))
    state_cap: Optional[int] = None
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def birth_rates(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        rates = self.birth(ns)
        if self.state_cap is not None:
            rates = np.where(ns >= self.state_cap, 0.0, rates)
        return rates

    def death_rates(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        rates = self.death(ns)
        if self.state_cap is not None:
            rates = np.where(ns > self.state_cap, 0.0, rates)
        return rates

    def rewards(self, ns: np.ndarray) -> np.ndarray:
        return self.reward(np.asarray(ns, dtype=np.int64))

    def with_taboo(self, taboo: TabooSet) -> "BdpModel":
        return replace(self, taboo=taboo)

    def with_reward(self, reward: RateFunction) -> "BdpModel":
        return replace(self, reward=reward)

    def probe_limit(self, horizon: int | None = None) -> int:
        if self.state_cap is not None:
            return self.state_cap
        return horizon if horizon is not None else get_settings().probe_horizon

    def validate(self, horizon: int | None = None) -> "BdpModel":
        ns = np.arange(self.probe_limit(horizon) + 1)
        for label, rates in (("birth", self.birth_rates(ns)), ("death", self.death_rates(ns))):
            if not np.all(np.isfinite(rates)):
                raise ModelError(f"{label} rate is not finite at n={int(ns[np.argmin(np.isfinite(rates))])}")
            if np.any(rates < 0):
                raise ModelError(f"{label} rate is negative at n={int(ns[np.argmax(rates < 0)])}")
        if self.death_rates(np.array([0]))[0] != 0:
            raise ModelError("Death rate at state 0 must be 0 (mu_0 = 0).")
        return self

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "params": dict(self.params),
            "birth": self.birth.label,
            "death": self.death.label,
            "reward": self.reward.label,
            "taboo": self.taboo.describe(),
            "state_cap": self.state_cap,
        }


class ModelKind(str, Enum):
    KENDALL = "kendall"
    MM_QUEUE = "mm_queue"
    MORAN = "moran"
    SIS = "sis"
    OPTION = "option"
    CUSTOM = "custom"


def _require(params: Mapping[str, float], *names: str) -> List[float]:
    missing = [name for name in names if name not in params]
    if missing:
        raise ModelError(f"Missing model parameters: {', '.join(missing)}")
    return [float(params[name]) for name in names]


def _positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise ModelError(f"Parameter {name} must be positive, got {value}.")


def _population(value: float) -> int:
    if value < 1 or not float(value).is_integer():
        raise ModelError(f"Population size N must be a positive integer, got {value}.")
    return int(value)


def _kendall(params: Mapping[str, float]) -> Dict[str, Any]:
    lam, mu = _require(params, "lambda", "mu")
    _positive(lambda_=lam, mu=mu)
    return {
        "birth": FormulaRate(lambda n: n * lam, f"n*{lam:g}"),
        "death": FormulaRate(lambda n: n * mu, f"n*{mu:g}"),
        "reward": FormulaRate(lambda n: n, "n"),
        "taboo": TabooSet(lower=0),
    }


def _mm_queue(params: Mapping[str, float]) -> Dict[str, Any]:
    lam, mu = _require(params, "lambda", "mu")
    _positive(lambda_=lam, mu=mu)
    servers = params.get("c")
    if servers is None or math.isinf(servers):
        death = FormulaRate(lambda n: n * mu, f"n*{mu:g}")
    else:
        if servers < 1 or not float(servers).is_integer():
            raise ModelError(f"Server count c must be an integer >= 1, got {servers}.")
        c = float(servers)
        death = FormulaRate(lambda n: np.minimum(n, c) * mu, f"min(n,{c:g})*{mu:g}")
    return {
        "birth": constant_rate(lam),
        "death": death,
        "reward": FormulaRate(lambda n: n, "n"),
        "taboo": TabooSet(lower=0),
    }


def _moran(params: Mapping[str, float]) -> Dict[str, Any]:
    size, fit_1, fit_2, u, v = _require(params, "N", "fitness_1", "fitness_2", "u", "v")
    N = _population(size)
    _positive(fitness_1=fit_1, fitness_2=fit_2)
    for name, prob in (("u", u), ("v", v)):
        if not 0.0 <= prob <= 1.0:
            raise ModelError(f"Mutation probability {name} must lie in [0, 1], got {prob}.")

    def birth(n: np.ndarray) -> np.ndarray:
        return (N - n) * (fit_1 * n * (1 - u) + fit_2 * (N - n) * v)

    def death(n: np.ndarray) -> np.ndarray:
        return n * (fit_2 * (N - n) * (1 - v) + fit_1 * n * u)

    return {
        "birth": FormulaRate(birth, "(N-n)*(fitness_1*n*(1-u) + fitness_2*(N-n)*v)"),
        "death": FormulaRate(death, "n*(fitness_2*(N-n)*(1-v) + fitness_1*n*u)"),
        "reward": FormulaRate(lambda n: n, "n"),
        "taboo": TabooSet(lower=0),
        "state_cap": N,
    }


def _sis(params: Mapping[str, float]) -> Dict[str, Any]:
    size, lam, mu = _require(params, "N", "lambda", "mu")
    N = _population(size)
    epsilon = float(params.get("epsilon", 0.0))
    cost_control = float(params.get("a", 0.0))
    cost_infected = float(params.get("b", 1.0))
    _positive(lambda_=lam, mu=mu)
    if epsilon < 0 or cost_control < 0 or cost_infected < 0:
        raise ModelError("SIS control epsilon and cost coefficients a, b must be nonnegative.")
    recovery = mu + epsilon
    return {
        "birth": FormulaRate(lambda n: lam * n * (N - n), f"{lam:g}*n*({N}-n)"),
        "death": FormulaRate(lambda n: n * recovery, f"n*{recovery:g}"),
        "reward": FormulaRate(
            lambda n: cost_control * epsilon + cost_infected * n,
            f"{cost_control * epsilon:g} + {cost_infected:g}*n",
        ),
        "taboo": TabooSet(lower=0),
        "state_cap": N,
    }


def _option(params: Mapping[str, float]) -> Dict[str, Any]:
    lam, mu, immigration, emigration, strike, start = _require(
        params, "lambda", "mu", "immigration", "emigration", "strike", "start"
    )
    _positive(lambda_=lam, mu=mu)
    if immigration < 0 or emigration < 0:
        raise ModelError("Immigration and emigration rates must be nonnegative.")
    lambda0 = float(params.get("lambda0", immigration))
    coef_a = float(params.get("a", 1.0))
    coef_b = float(params.get("b", 0.0))
    if lambda0 < 0:
        raise ModelError(f"lambda0 must be nonnegative, got {lambda0}.")
    if coef_a < 0 or coef_b < 0 or coef_a + coef_b == 0:
        raise ModelError(f"Reward weights a, b must be nonnegative and not both zero, got a={coef_a}, b={coef_b}.")
    if not float(start).is_integer() or start < 0:
        raise ModelError(f"Option start must be a nonnegative integer price level, got {start}.")
    if not float(strike).is_integer() or strike < 1:
        raise ModelError(f"Strike must be a positive integer state, got {strike}.")
    if lambda0 != immigration:
        logger.info("Option process uses lambda0=%g instead of the immigration convention", lambda0)

    def birth(n: np.ndarray) -> np.ndarray:
        return np.where(n == 0, lambda0, n * lam + immigration)

    def death(n: np.ndarray) -> np.ndarray:
        return np.where(n == 0, 0.0, n * mu + emigration)

    return {
        "birth": FormulaRate(birth, f"n*{lam:g} + {immigration:g} (lambda0={lambda0:g})"),
        "death": FormulaRate(death, f"n*{mu:g} + {emigration:g} (mu0=0)"),
        "reward": FormulaRate(lambda n: coef_a * n + coef_b * start, f"{coef_a:g}*n + {coef_b * start:g}"),
        "taboo": TabooSet(upper=int(strike)),
    }


_BUILDERS: Dict[ModelKind, Callable[[Mapping[str, float]], Dict[str, Any]]] = {
    ModelKind.KENDALL: _kendall,
    ModelKind.MM_QUEUE: _mm_queue,
    ModelKind.MORAN: _moran,
    ModelKind.SIS: _sis,
    ModelKind.OPTION: _option,
}


def make_model(
    kind: ModelKind | str,
    params: Mapping[str, float],
    *,
    taboo: TabooSet | None = None,
    reward: RateFunction | None = None,
) -> BdpModel:
    """
    Build one of the built-in models.

    Parameter names per kind: kendall (lambda, mu); mm_queue (lambda, mu, optional c,
    infinite servers when absent); moran (N, fitness_1, fitness_2, u, v); sis (N,
    lambda, mu, epsilon, a, b); option (lambda, mu, immigration, emigration, strike,
    start, optional lambda0 defaulting to immigration, optional a = 1 and b = 0
    so that g(n) = n).
    """

    kind = ModelKind(kind)
    if kind is ModelKind.CUSTOM:
        raise ModelError("Custom models are defined through rate specifications, not make_model.")
    parts = _BUILDERS[kind](params)
    if taboo is not None:
        parts["taboo"] = taboo
    if reward is not None:
        parts["reward"] = reward
    model = BdpModel(name=kind.value, params=dict(params), **parts)
    return model.validate()



class RateSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    expr: Optional[str] = None
    table: Optional[List[float]] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "RateSpec":
        if (self.expr is None) == (self.table is None):
            raise ValueError("A rate needs exactly one of 'expr' or 'table'.")
        if self.table is not None and not self.table:
            raise ValueError("Rate tables must not be empty.")
        return self


class TabooSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lower: Optional[int] = Field(default=None, ge=0)
    upper: Optional[int] = Field(default=None, ge=0)


class ModelDocument(BaseModel):
    """JSON schema shared by model files and service requests."""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    kind: Literal["kendall", "mm_queue", "moran", "sis", "option", "custom"]
    params: Dict[str, float] = Field(default_factory=dict)
    birth: Optional[RateSpec] = None
    death: Optional[RateSpec] = None
    reward: Optional[RateSpec] = None
    taboo: Optional[TabooSpec] = None
    state_cap: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _custom_rates(self) -> "ModelDocument":
        if self.kind == "custom":
            if self.birth is None or self.death is None:
                raise ValueError("Custom models require 'birth' and 'death' rates.")
            if self.taboo is None:
                raise ValueError("Custom models require a 'taboo' barrier set.")
        tabulated = [spec for spec in (self.birth, self.death, self.reward) if spec and spec.table]
        if tabulated and self.state_cap is None:
            raise ValueError("tabulated rates require state_cap")
        for spec in tabulated:
            if len(spec.table) != self.state_cap + 1:
                raise ValueError(
                    f"Rate tables must list states 0..state_cap ({self.state_cap + 1} values), "
                    f"got {len(spec.table)}."
                )
        return self


def _rate_from_spec(spec: RateSpec, params: Mapping[str, float]) -> RateFunction:
    if spec.table is not None:
        return TableRate(tuple(float(value) for value in spec.table))
    return ExpressionRate(spec.expr, dict(params))


def document_to_model(document: ModelDocument) -> BdpModel:
    taboo = (
        TabooSet(lower=document.taboo.lower, upper=document.taboo.upper) if document.taboo else None
    )
    reward = _rate_from_spec(document.reward, document.params) if document.reward else None

    if document.kind != "custom":
        if document.birth or document.death:
            raise ModelError("Built-in model kinds take 'params' only; use kind 'custom' for rates.")
        model = make_model(document.kind, document.params, taboo=taboo, reward=reward)
        if document.state_cap is not None:
            model = replace(model, state_cap=document.state_cap).validate()
        return model

    model = BdpModel(
        birth=_rate_from_spec(document.birth, document.params),
        death=_rate_from_spec(document.death, document.params),
        taboo=taboo,
        reward=reward or constant_rate(1.0),
        state_cap=document.state_cap,
        name="custom",
        params=dict(document.params),
    )
    return model.validate()


def _reject_constant(token: str) -> float:
    raise ModelError(f"Non-finite number '{token}' is not accepted in model files.")


def parse_model_document(raw: str | bytes | Dict[str, Any]) -> ModelDocument:
    try:
        data = raw if isinstance(raw, dict) else json.loads(raw, parse_constant=_reject_constant)
        return ModelDocument.model_validate(data)
    except json.JSONDecodeError as exc:
        raise ModelError(f"Model file is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        raise ModelError(f"Model file violates the schema: {exc}") from exc


def load_model_file(path: str | Path) -> BdpModel:
    """Load a JSON model file (see :class:`ModelDocument`) into a validated model."""

    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ModelError(f"Model file not found: {path}") from exc
    model = document_to_model(parse_model_document(raw))
    logger.debug("Loaded %s model from %s", model.name, path)
    return model
