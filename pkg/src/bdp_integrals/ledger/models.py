"""
SQLModel tables for recorded computations and search probes.
"""

from __future__ import annotations

from datetime import datetime
from typing import Optional

from sqlalchemy import Column, Text
from sqlmodel import Field, SQLModel


class RunRecord(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    created_at: datetime = Field(default_factory=datetime.utcnow, index=True)
    kind: str = Field(index=True)
    source: str = Field(default="cli", index=True)
    params: str = Field(default="{}", sa_column=Column(Text))
    result: str = Field(default="{}", sa_column=Column(Text))


class ProbeRecord(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: int = Field(foreign_key="runrecord.id", index=True)
    value: float
    probability: float
    err: float = Field(default=0.0)
