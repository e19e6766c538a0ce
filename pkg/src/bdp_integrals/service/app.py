"""
FastAPI application factory for bdp_integrals.
"""

from __future__ import annotations

import logging
import math

from fastapi import FastAPI, Request, status
from fastapi.responses import JSONResponse

from bdp_integrals.errors import ConvergenceError, ModelError, MonotonicityError, PreconditionError
from bdp_integrals.service.ledger_routes import router as ledger_router
from bdp_integrals.service.routes import router as compute_router

logger = logging.getLogger(__name__)


async def _unprocessable(request: Request, exc: Exception) -> JSONResponse:
    return JSONResponse(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, content={"detail": str(exc)})


async def _not_converged(request: Request, exc: ConvergenceError) -> JSONResponse:
    logger.warning("Computation did not converge: %s", exc)
    err_est = exc.err_est if exc.err_est is not None and math.isfinite(exc.err_est) else None
    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content={"detail": str(exc), "err_est": err_est},
    )


async def _not_monotone(request: Request, exc: MonotonicityError) -> JSONResponse:
    return JSONResponse(status_code=status.HTTP_409_CONFLICT, content={"detail": str(exc)})


def create_app() -> FastAPI:
    app = FastAPI(
        title="bdp-integrals",
        description="First-passage and reward-integral distributions of birth-death processes.",
        version="0.1.0",
    )
    app.include_router(compute_router, prefix="/api")
    app.include_router(ledger_router, prefix="/api/runs", tags=["runs"])
    app.add_exception_handler(ModelError, _unprocessable)
    app.add_exception_handler(PreconditionError, _unprocessable)
    app.add_exception_handler(ConvergenceError, _not_converged)
    app.add_exception_handler(MonotonicityError, _not_monotone)
    return app


app = create_app()
