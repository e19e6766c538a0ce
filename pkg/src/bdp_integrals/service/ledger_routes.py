"""
Routes summarising the run ledger.
"""

from __future__ import annotations

from fastapi import APIRouter, Depends, Query

from bdp_integrals.ledger.repository import RunRecorder, get_run_recorder
from bdp_integrals.service.models import RecentRunSummary, RunKindSummary, RunsSummaryResponse

router = APIRouter()


def get_recorder() -> RunRecorder:
    return get_run_recorder()


@router.get("/summary", response_model=RunsSummaryResponse)
def runs_summary(
    limit: int = Query(10, ge=1, le=500), recorder: RunRecorder = Depends(get_recorder)
) -> RunsSummaryResponse:
    kinds = [RunKindSummary(kind=kind, count=count) for kind, count in sorted(recorder.kind_counts().items())]
    recent = [RecentRunSummary(**run) for run in recorder.recent_runs(limit=limit)]
    return RunsSummaryResponse(kinds=kinds, recent_runs=recent)
