"""
Process-wide numerical defaults read from the environment.
"""

from __future__ import annotations

import os
from functools import lru_cache
from typing import Optional

from pydantic import BaseModel, Field


class NumericsSettings(BaseModel):
    gamma: float = Field(10.0, gt=0, description="Target digits of the discretization error.")
    series_terms: int = Field(500, ge=1, description="Fourier-series terms before Euler averaging.")
    euler_terms: int = Field(11, ge=1, description="Width of the Euler summation window.")
    max_extensions: int = Field(3, ge=0, description="Series doublings allowed when unsettled.")
    max_depth: int = Field(100_000, ge=1, description="Continued-fraction depth limit.")
    trunc_tol: Optional[float] = Field(None, gt=0, description="Per-point truncation tolerance.")
    probe_horizon: int = Field(1000, ge=1, description="States probed when checking rate invariants.")
    ledger_url: str = Field("sqlite:///./bdp_runs.db", description="Run ledger database URL.")


def _env(name: str) -> Optional[str]:
    value = os.getenv(name)
    return value if value not in (None, "") else None


@lru_cache(maxsize=1)
def get_settings() -> NumericsSettings:
    overrides = {
        "gamma": _env("BDP_GAMMA"),
        "series_terms": _env("BDP_SERIES_TERMS"),
        "euler_terms": _env("BDP_EULER_TERMS"),
        "max_extensions": _env("BDP_MAX_EXTENSIONS"),
        "max_depth": _env("BDP_MAX_DEPTH"),
        "trunc_tol": _env("BDP_TRUNC_TOL"),
        "probe_horizon": _env("BDP_PROBE_HORIZON"),
        "ledger_url": _env("BDP_LEDGER_URL"),
    }
    return NumericsSettings(**{key: value for key, value in overrides.items() if value is not None})
