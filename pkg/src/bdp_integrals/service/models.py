"""
Pydantic models for service requests and responses.
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from bdp_integrals.core.modelspec import ModelDocument, TabooSpec


class GridSpec(BaseModel):
    start: float = Field(..., gt=0)
    stop: float = Field(..., gt=0)
    step: float = Field(..., gt=0)


class PlanOverrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: Optional[float] = Field(default=None, gt=0)
    series_terms: Optional[int] = Field(default=None, ge=1)
    euler_terms: Optional[int] = Field(default=None, ge=1)
    trunc_tol: Optional[float] = Field(default=None, gt=0)
    max_extensions: Optional[int] = Field(default=None, ge=0)
    max_depth: Optional[int] = Field(default=None, ge=1)


class TransitionRequest(BaseModel):
    model: ModelDocument
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    grid: GridSpec
    plan: PlanOverrides = Field(default_factory=PlanOverrides)


class DistributionRequest(BaseModel):
    model: ModelDocument
    i: int = Field(..., ge=0)
    grid: GridSpec
    taboo: Optional[TabooSpec] = Field(default=None, description="Overrides the model's barriers.")
    cdf: bool = True
    density: bool = False
    plan: PlanOverrides = Field(default_factory=PlanOverrides)


class ExplosionRequest(BaseModel):
    model: ModelDocument
    terms: int = Field(10_000, ge=2)


class ControlSearchRequest(BaseModel):
    N: int = Field(100, ge=1)
    lam: float = Field(0.1, gt=0, alias="lambda")
    mu: float = Field(8.0, gt=0)
    a: float = Field(0.0, ge=0)
    b: float = Field(0.3, ge=0)
    i: int = Field(50, ge=1)
    C: float = Field(7.0, gt=0)
    alpha: float = Field(0.05, gt=0, lt=1)
    eps_range: Tuple[float, float] = (0.0, 10.0)
    step: float = Field(0.5, gt=0)
    tol: float = Field(0.01, gt=0)
    record: bool = False
    plan: PlanOverrides = Field(default_factory=PlanOverrides)

    model_config = ConfigDict(populate_by_name=True)


class StrikeSearchRequest(BaseModel):
    lam: float = Field(2.0, gt=0, alias="lambda")
    mu: float = Field(1.5, gt=0)
    immigration: float = Field(0.3, ge=0)
    emigration: float = Field(0.5, ge=0)
    lambda0: Optional[float] = Field(default=None, ge=0)
    a: float = Field(1.0, ge=0)
    b: float = Field(0.0, ge=0)
    i: int = Field(10, ge=0)
    R: float = 10.0
    alpha: float = Field(0.05, gt=0, lt=1)
    k_min: Optional[int] = None
    k_max: int = 40
    record: bool = False
    plan: PlanOverrides = Field(default_factory=PlanOverrides)

    model_config = ConfigDict(populate_by_name=True)


class CurveResponse(BaseModel):
    grid: List[float]
    cdf: Optional[List[float]] = None
    density: Optional[List[float]] = None
    err: List[float]
    flags: Dict[str, Any] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)
    total_mass: Optional[float] = None


class ExplosionResponse(BaseModel):
    verdict: str
    expected_passage_to_infinity: Optional[float] = Field(default=None, description="null when infinite.")
    start_state: int
    decay_exponent: Optional[float] = None
    partial_sum_trace: List[float] = Field(default_factory=list)


class ProbeModel(BaseModel):
    value: float
    probability: float
    err: float


class SearchResponse(BaseModel):
    value: Optional[float] = None
    constraint_prob: Optional[float] = None
    bracket: Optional[List[float]] = None
    feasible: bool
    probes: List[ProbeModel] = Field(default_factory=list)
    run_id: Optional[int] = None


class RecentRunSummary(BaseModel):
    id: int
    created_at: str
    kind: str
    source: str
    params: Dict[str, Any] = Field(default_factory=dict)
    result: Dict[str, Any] = Field(default_factory=dict)
    probes: List[ProbeModel] = Field(default_factory=list)


class RunKindSummary(BaseModel):
    kind: str
    count: int


class RunsSummaryResponse(BaseModel):
    kinds: List[RunKindSummary]
    recent_runs: List[RecentRunSummary]
