"""
API routes exposing transition, passage, reward, explosion and search computations.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from fastapi import APIRouter, Depends

from bdp_integrals.core.laplace import DistCurve, InversionPlan, make_grid
from bdp_integrals.core.modelspec import BdpModel, ModelDocument, TabooSet, document_to_model
from bdp_integrals.core.passage import explosion_check, fpt_cdf, fpt_density, transition_curve
from bdp_integrals.core.reward import reward_cdf, reward_density
from bdp_integrals.core.search import SearchResult, min_control, min_strike, option_family, sis_family
from bdp_integrals.errors import PreconditionError
from bdp_integrals.ledger.repository import RunRecorder, get_run_recorder
from bdp_integrals.service.models import (
    ControlSearchRequest,
    CurveResponse,
    DistributionRequest,
    ExplosionRequest,
    ExplosionResponse,
    GridSpec,
    PlanOverrides,
    SearchResponse,
    StrikeSearchRequest,
    TransitionRequest,
)
from bdp_integrals.settings import NumericsSettings, get_settings

logger = logging.getLogger(__name__)

router = APIRouter()


def get_recorder() -> RunRecorder:
    return get_run_recorder()


def get_numerics() -> NumericsSettings:
    return get_settings()


def _plan(overrides: PlanOverrides, settings: NumericsSettings) -> InversionPlan:
    return InversionPlan.from_settings(settings, **overrides.model_dump())


def _grid(spec: GridSpec) -> np.ndarray:
    return make_grid(spec.start, spec.stop, spec.step)


def _model(document: ModelDocument) -> BdpModel:
    return document_to_model(document)


def _curve(curve: DistCurve) -> CurveResponse:
    return CurveResponse(**curve.to_dict())


def _distribution(request: DistributionRequest, settings: NumericsSettings, cdf_fn, density_fn) -> CurveResponse:
    if not (request.cdf or request.density):
        raise PreconditionError("Request at least one of 'cdf' or 'density'.")
    model = _model(request.model)
    taboo = TabooSet(lower=request.taboo.lower, upper=request.taboo.upper) if request.taboo else None
    grid = _grid(request.grid)
    plan = _plan(request.plan, settings)

    curve = None
    if request.cdf:
        curve = cdf_fn(model, request.i, taboo, grid, plan)
    if request.density:
        density = density_fn(model, request.i, taboo, grid, plan)
        curve = density if curve is None else curve.merge(density)
    return _curve(curve)


def _search_response(result: SearchResult, run_id: int | None) -> SearchResponse:
    return SearchResponse(**result.to_dict(), run_id=run_id)


@router.post("/transition", response_model=CurveResponse)
def transition(
    request: TransitionRequest, settings: NumericsSettings = Depends(get_numerics)
) -> CurveResponse:
    model = _model(request.model)
    return _curve(transition_curve(model, request.i, request.j, _grid(request.grid), _plan(request.plan, settings)))


@router.post("/passage", response_model=CurveResponse)
def passage(request: DistributionRequest, settings: NumericsSettings = Depends(get_numerics)) -> CurveResponse:
    return _distribution(request, settings, fpt_cdf, fpt_density)


@router.post("/reward", response_model=CurveResponse)
def reward(request: DistributionRequest, settings: NumericsSettings = Depends(get_numerics)) -> CurveResponse:
    def cdf_fn(model, i, taboo, grid, plan):
        return reward_cdf(model, i, grid, plan, taboo)

    def density_fn(model, i, taboo, grid, plan):
        return reward_density(model, i, grid, plan, taboo)

    return _distribution(request, settings, cdf_fn, density_fn)


@router.post("/explosion", response_model=ExplosionResponse)
def explosion(request: ExplosionRequest) -> ExplosionResponse:
    report = explosion_check(_model(request.model), terms=request.terms)
    payload = report.to_dict()
    if not math.isfinite(payload["expected_passage_to_infinity"]):
        payload["expected_passage_to_infinity"] = None
    return ExplosionResponse(**payload)


@router.post("/search/control", response_model=SearchResponse)
def search_control(
    request: ControlSearchRequest,
    settings: NumericsSettings = Depends(get_numerics),
    recorder: RunRecorder = Depends(get_recorder),
) -> SearchResponse:
    family = sis_family(request.N, request.lam, request.mu, request.a, request.b)
    result = min_control(
        family,
        request.i,
        request.C,
        request.alpha,
        request.eps_range,
        step=request.step,
        tol=request.tol,
        plan=_plan(request.plan, settings),
    )
    run_id = None
    if request.record:
        params = request.model_dump(by_alias=True, exclude={"record", "plan"})
        outcome = {key: value for key, value in result.to_dict().items() if key != "probes"}
        run_id = recorder.record("search-control", params, outcome, result.to_dict()["probes"], source="api")
    return _search_response(result, run_id)


@router.post("/search/strike", response_model=SearchResponse)
def search_strike(
    request: StrikeSearchRequest,
    settings: NumericsSettings = Depends(get_numerics),
    recorder: RunRecorder = Depends(get_recorder),
) -> SearchResponse:
    family = option_family(
        request.lam,
        request.mu,
        request.immigration,
        request.emigration,
        request.i,
        a=request.a,
        b=request.b,
        lambda0=request.lambda0,
    )
    k_min = request.k_min if request.k_min is not None else request.i + 1
    result = min_strike(
        family, request.i, request.R, request.alpha, range(k_min, request.k_max + 1), plan=_plan(request.plan, settings)
    )
    run_id = None
    if request.record:
        params = request.model_dump(by_alias=True, exclude={"record", "plan"})
        outcome = {key: value for key, value in result.to_dict().items() if key != "probes"}
        run_id = recorder.record("search-strike", params, outcome, result.to_dict()["probes"], source="api")
    return _search_response(result, run_id)
