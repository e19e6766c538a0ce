import math

import numpy as np
import pytest

from bdp_integrals.core.laplace import (
    DistCurve,
    FunctionTransform,
    InversionPlan,
    TransformSum,
    invert,
    invert_grid,
    make_grid,
    parse_grid,
    transform_fij,
    transition_probability,
)
from bdp_integrals.core.modelspec import BdpModel, TableRate, TabooSet, make_model
from bdp_integrals.errors import PreconditionError
from bdp_integrals.settings import NumericsSettings

from oracles import resolvent_entry, two_state_p00

TIMES = np.arange(1.0, 11.0)


def _two_state(a: float, b: float) -> BdpModel:
    return BdpModel(
        birth=TableRate((a, 0.0)),
        death=TableRate((0.0, b)),
        taboo=TabooSet(upper=1),
        state_cap=1,
    )


@pytest.mark.parametrize(
    "transform, exact",
    [
        (FunctionTransform(lambda s: 1.0 / (s + 1.0)), lambda t: np.exp(-t)),
        (FunctionTransform(lambda s: 1.0 / s), lambda t: np.ones_like(t)),
        (FunctionTransform(lambda s: 1.0 / s**2, sup_bound=4.0 * TIMES.max()), lambda t: t),
    ],
    ids=["exponential", "step", "ramp"],
)
def test_known_transform_pairs(transform, exact) -> None:
    result = invert_grid(transform, TIMES, InversionPlan())
    error = np.abs(result.values - exact(TIMES))

    assert np.all(error <= 1e-7)
    assert np.all(error <= result.err + 1e-10)
    assert result.settled.all()


def test_transform_sum_adds_pointwise() -> None:
    fn = TransformSum((FunctionTransform(lambda s: 1.0 / (s + 1.0)), FunctionTransform(lambda s: 1.0 / (s + 2.0))))
    value, err = invert(fn, 0.7)

    assert value == pytest.approx(math.exp(-0.7) + math.exp(-1.4), abs=1e-8)
    assert err < 1e-8


def test_two_state_transition_probabilities() -> None:
    model = _two_state(0.3, 1.2)
    t = np.array([0.1, 0.5, 1.0, 4.0, 20.0])

    p00 = invert_grid(transform_fij(model, 0, 0), t)
    p01 = invert_grid(transform_fij(model, 0, 1), t)

    np.testing.assert_allclose(p00.values, two_state_p00(0.3, 1.2, t), atol=1e-8)
    np.testing.assert_allclose(p00.values + p01.values, 1.0, atol=1e-8)
    value, err = transition_probability(model, 0, 0, 2.0)
    assert value == pytest.approx(float(two_state_p00(0.3, 1.2, 2.0)), abs=1e-8)
    assert err < 1e-6


def test_transition_transform_on_finite_chain_is_exact() -> None:
    model = _two_state(0.3, 1.2)
    s = np.array([1.0 + 2.0j, 0.2 - 5.0j])
    values = transform_fij(model, 0, 0).evaluate(s, tol=1e-12)

    np.testing.assert_allclose(values.value, (s + 1.2) / (s * (s + 1.5)), rtol=1e-13)
    np.testing.assert_allclose(values.err, 0.0)


@pytest.mark.parametrize(
    "kind, params, size",
    [
        ("moran", {"N": 20, "fitness_1": 1.0, "fitness_2": 1.0, "u": 0.02, "v": 0.05}, 21),
        ("mm_queue", {"lambda": 1.0, "mu": 2.0}, 120),
    ],
    ids=["finite", "truncated"],
)
@pytest.mark.parametrize("i, j", [(5, 12), (12, 5), (7, 7)])
def test_transition_transform_matches_the_resolvent(kind, params, size, i, j) -> None:
    model = make_model(kind, params)
    s = np.array([0.5 + 0.0j, 1.0 + 3.0j, 2.0 - 9.0j])
    values = transform_fij(model, i, j).evaluate(s, tol=1e-13)
    expected = np.array([resolvent_entry(model, i, j, point, size) for point in s])

    np.testing.assert_allclose(values.value, expected, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize(
    "kind, params, pairs",
    [
        (
            "moran",
            {"N": 50, "fitness_1": 0.5, "fitness_2": 1.0, "u": 0.0, "v": 0.03},
            [(25, 25), (25, 30), (30, 25)],
        ),
        (
            "sis",
            {"N": 100, "lambda": 0.1, "mu": 8.0, "epsilon": 0.0},
            [(50, 50), (50, 45), (45, 50)],
        ),
    ],
    ids=["moran", "sis"],
)
def test_finite_chain_transform_matches_the_resolvent_on_the_contour(kind, params, pairs) -> None:
    model = make_model(kind, params)
    s = (InversionPlan().A + 2j * math.pi * np.arange(20)) / 2.0
    for i, j in pairs:
        values = transform_fij(model, i, j).evaluate(s, tol=1e-14)
        expected = np.array([resolvent_entry(model, i, j, point, params["N"] + 1) for point in s])

        np.testing.assert_allclose(values.value, expected, rtol=1e-10)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_finite_chain_rows_sum_to_one(t: float) -> None:
    model = make_model("moran", {"N": 20, "fitness_1": 1.0, "fitness_2": 1.0, "u": 0.02, "v": 0.05})

    total = sum(transition_probability(model, 10, j, t)[0] for j in range(21))

    assert total == pytest.approx(1.0, abs=1e-8)


def test_transform_of_unreachable_state_is_zero() -> None:
    model = _two_state(0.0, 1.2)
    values = transform_fij(model, 0, 1).evaluate(np.array([1.0 + 1.0j]), tol=1e-12)

    assert values.value[0] == 0.0


def test_states_outside_the_cap_are_rejected() -> None:
    with pytest.raises(PreconditionError):
        transform_fij(_two_state(0.3, 1.2), 0, 2)


def test_density_budget_is_scaled_by_the_sup_estimate() -> None:
    density = FunctionTransform(lambda s: 5.0 / (s * (s + 5.0)), multiply_by_s=True)
    result = invert_grid(density, [0.05, 0.5])

    np.testing.assert_allclose(result.values, 5.0 * np.exp(-5.0 * np.array([0.05, 0.5])), atol=1e-7)
    assert result.heuristic_error


def test_density_budget_sees_a_peak_beyond_the_grid() -> None:
    # Gamma(20, 50) density: tiny at t = 0.1, peak of about 4.4 near t = 0.38
    density = FunctionTransform(lambda s: (50.0 / (50.0 + s)) ** 20 / s, multiply_by_s=True)
    plan = InversionPlan()
    result = invert_grid(density, [0.1], plan)

    exact = 50.0 * 5.0**19 * math.exp(-5.0) / math.factorial(19)
    assert result.values[0] == pytest.approx(exact, abs=1e-7)
    assert result.heuristic_error
    assert result.err[0] >= 4.0 * plan.discretization_error


def test_short_series_is_flagged_unsettled() -> None:
    plan = InversionPlan(series_terms=2, max_extensions=0)
    result = invert_grid(FunctionTransform(lambda s: 1.0 / (s + 1.0)), [1.0], plan)
    curve = DistCurve.from_inversion(np.array([1.0]), result, "cdf")

    assert not result.settled[0]
    assert curve.flags["unsettled_points"] == 1
    assert any("did not settle" in message for message in curve.warnings)


def test_grid_must_be_positive_and_nonempty() -> None:
    fn = FunctionTransform(lambda s: 1.0 / s)
    with pytest.raises(PreconditionError):
        invert_grid(fn, [])
    with pytest.raises(PreconditionError):
        invert_grid(fn, [1.0, 0.0])
    with pytest.raises(PreconditionError):
        invert_grid(fn, [-2.0])


def test_plan_parameters() -> None:
    plan = InversionPlan(gamma=8.0)

    assert plan.A == pytest.approx(8.0 * math.log(10.0))
    assert plan.discretization_error == pytest.approx(1e-8, rel=1e-6)
    assert plan.point_tolerance(512) == pytest.approx(1e-8 / 5120, rel=1e-6)
    assert InversionPlan(trunc_tol=1e-9).point_tolerance(512) == 1e-9
    with pytest.raises(PreconditionError):
        InversionPlan(gamma=0.0)


def test_plan_from_settings_with_overrides() -> None:
    settings = NumericsSettings(gamma=6.0, series_terms=200)
    plan = InversionPlan.from_settings(settings, series_terms=300, trunc_tol=None)

    assert plan.gamma == 6.0
    assert plan.series_terms == 300
    assert plan.trunc_tol is None


def test_make_grid_is_inclusive_and_rounded() -> None:
    grid = make_grid(0.1, 30.0, 0.1)

    assert grid.size == 300
    assert grid[0] == 0.1 and grid[2] == 0.3 and grid[-1] == 30.0
    np.testing.assert_array_equal(parse_grid("0.5:60:0.5"), make_grid(0.5, 60.0, 0.5))


@pytest.mark.parametrize("text", ["1:2", "a:2:0.1", "0:1:0.1", "2:1:0.1", "1:2:0"])
def test_parse_grid_rejects_malformed_specs(text: str) -> None:
    with pytest.raises(PreconditionError):
        parse_grid(text)


def test_dist_curve_merge_and_rows() -> None:
    grid = np.array([1.0, 2.0])
    cdf = DistCurve(grid=grid, cdf=np.array([0.1, 0.2]), err=np.array([1e-9, 2e-9]),
                    flags={"unsettled_points": 0, "heuristic_density_error": False}, total_mass=0.5)
    density = DistCurve(grid=grid, density=np.array([0.3, 0.4]), err=np.array([3e-9, 1e-9]),
                        flags={"unsettled_points": 2, "heuristic_density_error": True}, warnings=["w"])

    merged = cdf.merge(density)

    assert merged.to_rows() == [(1.0, 0.1, 0.3, 3e-9), (2.0, 0.2, 0.4, 2e-9)]
    assert merged.flags == {"unsettled_points": 2, "heuristic_density_error": True}
    assert merged.total_mass == 0.5
    assert merged.warnings == ["w"]
    assert merged.to_dict()["density"] == [0.3, 0.4]
    with pytest.raises(PreconditionError):
        cdf.merge(DistCurve(grid=np.array([1.0, 3.0]), cdf=np.zeros(2), err=np.zeros(2)))
