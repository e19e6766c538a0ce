import math

from fastapi.testclient import TestClient
from sqlalchemy.pool import StaticPool
from sqlmodel import create_engine

from bdp_integrals.core import search
from bdp_integrals.errors import ConvergenceError, MonotonicityError
from bdp_integrals.ledger import RunRecorder
from bdp_integrals.service import ledger_routes, routes
from bdp_integrals.service.app import create_app

KENDALL = {"kind": "kendall", "params": {"lambda": 0.1, "mu": 0.5}}
GRID = {"start": 1.0, "stop": 3.0, "step": 1.0}


def _test_client() -> tuple[TestClient, RunRecorder]:
    app = create_app()
    engine = create_engine(
        "sqlite://",
        connect_args={"check_same_thread": False},
        poolclass=StaticPool,
    )
    recorder = RunRecorder(engine=engine)

    def override_recorder() -> RunRecorder:
        return recorder

    app.dependency_overrides[routes.get_recorder] = override_recorder
    app.dependency_overrides[ledger_routes.get_recorder] = override_recorder
    return TestClient(app), recorder


def test_reward_endpoint_returns_cdf_and_density() -> None:
    client, _ = _test_client()

    response = client.post("/api/reward", json={"model": KENDALL, "i": 1, "grid": GRID, "density": True})

    assert response.status_code == 200
    data = response.json()
    assert data["grid"] == [1.0, 2.0, 3.0]
    assert len(data["cdf"]) == 3 and len(data["density"]) == 3
    assert data["cdf"] == sorted(data["cdf"])
    assert data["total_mass"] == 1.0
    assert data["flags"]["unsettled_points"] == 0


def test_passage_endpoint_honours_taboo_override() -> None:
    client, _ = _test_client()
    model = {"kind": "mm_queue", "params": {"lambda": 1.0, "mu": 1.0, "c": 1}}

    lower = client.post("/api/passage", json={"model": model, "i": 3, "grid": GRID}).json()
    both = client.post(
        "/api/passage", json={"model": model, "i": 3, "grid": GRID, "taboo": {"lower": 0, "upper": 6}}
    ).json()

    assert all(b > a for a, b in zip(lower["cdf"], both["cdf"]))


def test_transition_endpoint_uses_plan_overrides() -> None:
    client, _ = _test_client()
    model = {
        "kind": "custom",
        "birth": {"table": [0.3, 0.0]},
        "death": {"table": [0.0, 1.2]},
        "taboo": {"upper": 1},
        "state_cap": 1,
    }

    response = client.post(
        "/api/transition",
        json={"model": model, "i": 0, "j": 0, "grid": {"start": 2.0, "stop": 2.0, "step": 1.0}, "plan": {"gamma": 12}},
    )

    assert response.status_code == 200
    assert math.isclose(response.json()["cdf"][0], 0.8 + 0.2 * math.exp(-3.0), abs_tol=1e-9)


def test_invalid_requests_are_unprocessable() -> None:
    client, _ = _test_client()

    schema = client.post("/api/passage", json={"model": {"kind": "custom", "birth": {"expr": "n"}}, "i": 1, "grid": GRID})
    rates = client.post(
        "/api/passage", json={"model": {"kind": "kendall", "params": {"lambda": -1, "mu": 1}}, "i": 1, "grid": GRID}
    )
    start = client.post("/api/passage", json={"model": KENDALL, "i": 0, "grid": GRID})
    nothing = client.post("/api/reward", json={"model": KENDALL, "i": 1, "grid": GRID, "cdf": False})

    assert schema.status_code == 422
    assert rates.status_code == 422 and "lambda" in rates.json()["detail"]
    assert start.status_code == 422 and "Initial state 0" in start.json()["detail"]
    assert nothing.status_code == 422


def test_explosion_endpoint_reports_null_for_infinite_time() -> None:
    client, _ = _test_client()

    kendall = client.post("/api/explosion", json={"model": KENDALL}).json()
    quadratic = client.post(
        "/api/explosion",
        json={"model": {"kind": "custom", "birth": {"expr": "(n+1)^2"}, "death": {"expr": "0"}, "taboo": {"lower": 0}}},
    ).json()

    assert kendall["verdict"] == "non_explosive"
    assert kendall["expected_passage_to_infinity"] is None
    assert quadratic["verdict"] == "explosive"
    assert math.isclose(quadratic["expected_passage_to_infinity"], math.pi**2 / 6.0, abs_tol=1e-4)


def test_recorded_search_appears_in_runs_summary() -> None:
    client, _ = _test_client()

    response = client.post("/api/search/control", json={"N": 10, "i": 5, "C": 0.001, "record": True})

    assert response.status_code == 200
    outcome = response.json()
    assert outcome["feasible"] is False
    assert outcome["run_id"] == 1
    assert len(outcome["probes"]) == 21

    summary = client.get("/api/runs/summary", params={"limit": 5}).json()
    assert summary["kinds"] == [{"kind": "search-control", "count": 1}]
    run = summary["recent_runs"][0]
    assert run["source"] == "api"
    assert run["params"]["lambda"] == 0.1
    assert run["result"]["feasible"] is False
    assert len(run["probes"]) == 21


def test_strike_search_endpoint(monkeypatch) -> None:
    client, recorder = _test_client()
    monkeypatch.setattr(search, "_probe_cdf", lambda model, i, point, plan: (0.5 / (model.taboo.upper - 10), 1e-9))

    response = client.post("/api/search/strike", json={"lambda": 2.0, "k_max": 30})

    assert response.status_code == 200
    assert response.json()["value"] == 21
    assert response.json()["run_id"] is None
    assert recorder.kind_counts() == {}


def test_monotonicity_violation_is_a_conflict(monkeypatch) -> None:
    client, _ = _test_client()

    def violate(*args, **kwargs):
        raise MonotonicityError("Pr(W < C) must not decrease with epsilon")

    monkeypatch.setattr(routes, "min_control", violate)

    response = client.post("/api/search/control", json={})

    assert response.status_code == 409
    assert "must not decrease" in response.json()["detail"]


def test_nonconvergence_reports_error_estimate(monkeypatch) -> None:
    client, _ = _test_client()

    def stall(model, terms):
        raise ConvergenceError("did not converge", err_est=math.inf)

    monkeypatch.setattr(routes, "explosion_check", stall)

    response = client.post("/api/explosion", json={"model": KENDALL})

    assert response.status_code == 500
    assert response.json() == {"detail": "did not converge", "err_est": None}
