"""
Persistence and aggregation of recorded runs.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from typing import Any, Dict, Iterable, List

from sqlalchemy import func, select
from sqlalchemy.engine import Engine
from sqlmodel import Session

from bdp_integrals.ledger.database import get_engine, init_db
from bdp_integrals.ledger.models import ProbeRecord, RunRecord

logger = logging.getLogger(__name__)


class RunRecorder:
    """
    Stores reproduction reports and search outcomes together with their probes.
    """

    def __init__(self, engine: Engine | None = None) -> None:
        self._engine = engine or get_engine()
        init_db(self._engine)

    @property
    def engine(self) -> Engine:
        return self._engine

    def record(
        self,
        kind: str,
        params: Dict[str, Any],
        result: Dict[str, Any],
        probes: Iterable[Dict[str, Any]] = (),
        *,
        source: str = "cli",
    ) -> int:
        with Session(self._engine) as session:
            run = RunRecord(
                kind=kind,
                source=source,
                params=json.dumps(params or {}, sort_keys=True),
                result=json.dumps(result or {}, sort_keys=True),
            )
            session.add(run)
            session.flush()

            for probe in probes or []:
                session.add(
                    ProbeRecord(
                        run_id=run.id,
                        value=float(probe["value"]),
                        probability=float(probe["probability"]),
                        err=float(probe.get("err", 0.0)),
                    )
                )
            session.commit()
            logger.debug("Recorded %s run %d", kind, run.id)
            return run.id

    def kind_counts(self) -> Dict[str, int]:
        with Session(self._engine) as session:
            statement = select(RunRecord.kind, func.count(RunRecord.id)).group_by(RunRecord.kind)
            results = session.exec(statement).all()
        return {kind: int(count) for kind, count in results}

    def recent_runs(self, limit: int = 10) -> List[Dict[str, Any]]:
        with Session(self._engine) as session:
            run_rows = session.exec(
                select(RunRecord).order_by(RunRecord.created_at.desc(), RunRecord.id.desc()).limit(limit)
            ).all()
            runs = [row if isinstance(row, RunRecord) else row[0] for row in run_rows]
            if not runs:
                return []

            probe_rows = session.exec(
                select(ProbeRecord).where(ProbeRecord.run_id.in_([run.id for run in runs]))
            ).all()
            probes = [row if isinstance(row, ProbeRecord) else row[0] for row in probe_rows]

        probe_map: Dict[int, List[Dict[str, float]]] = defaultdict(list)
        for probe in probes:
            probe_map[probe.run_id].append(
                {"value": probe.value, "probability": probe.probability, "err": probe.err}
            )

        return [
            {
                "id": run.id,
                "created_at": run.created_at.isoformat(),
                "kind": run.kind,
                "source": run.source,
                "params": json.loads(run.params),
                "result": json.loads(run.result),
                "probes": sorted(probe_map.get(run.id, []), key=lambda item: item["value"]),
            }
            for run in runs
        ]


_singleton_recorder: RunRecorder | None = None


def get_run_recorder() -> RunRecorder:
    global _singleton_recorder
    if _singleton_recorder is None:
        _singleton_recorder = RunRecorder()
    return _singleton_recorder
