import math

import numpy as np
import pytest
from scipy.linalg import expm

from bdp_integrals.core.modelspec import BdpModel, ExpressionRate, TabooSet, constant_rate, make_model
from bdp_integrals.core.passage import (
    ExplosionVerdict,
    absorb,
    absorption_probability,
    explosion_check,
    fpt_cdf,
    fpt_density,
    transition_curve,
)
from bdp_integrals.core.reward import kendall_reference_density
from bdp_integrals.errors import ModelError, PreconditionError

from oracles import erlang_cdf, ruin_probability


def _custom(birth: str, death: str, taboo: TabooSet | None = None, cap: int | None = None) -> BdpModel:
    return BdpModel(
        birth=ExpressionRate(birth, {}),
        death=ExpressionRate(death, {}),
        taboo=taboo or TabooSet(lower=0),
        state_cap=cap,
    )


def test_pure_death_passage_is_erlang() -> None:
    model = _custom("0", "min(n,1)*2")
    grid = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0])

    cdf = fpt_cdf(model, 3, None, grid)
    density = fpt_density(model, 3, None, grid)

    np.testing.assert_allclose(cdf.cdf, erlang_cdf(3, 2.0, grid), atol=1e-8)
    np.testing.assert_allclose(density.density, 4.0 * grid**2 * np.exp(-2.0 * grid), atol=1e-7)
    assert cdf.total_mass == pytest.approx(1.0)
    assert not cdf.warnings


def test_two_barrier_walk_matches_matrix_exponential() -> None:
    model = BdpModel(
        birth=constant_rate(1.0),
        death=ExpressionRate("min(n,1)", {}),
        taboo=TabooSet(lower=0, upper=10),
    )
    grid = np.array([1.0, 5.0, 12.0, 30.0, 300.0])

    curve = fpt_cdf(model, 5, None, grid)

    transient = -2.0 * np.eye(9) + np.eye(9, k=1) + np.eye(9, k=-1)
    survival = np.array([expm(transient * t)[4].sum() for t in grid])
    np.testing.assert_allclose(curve.cdf, 1.0 - survival, atol=1e-8)
    assert curve.total_mass == pytest.approx(1.0)
    assert curve.cdf[-1] == pytest.approx(1.0, abs=1e-7)


def test_taboo_override_takes_precedence_over_model_barrier() -> None:
    model = make_model("mm_queue", {"lambda": 1.0, "mu": 1.0, "c": 1})
    grid = [2.0, 10.0]

    lower_only = fpt_cdf(model, 3, None, grid)
    both = fpt_cdf(model, 3, TabooSet(lower=0, upper=6), grid)

    assert np.all(both.cdf > lower_only.cdf)
    assert absorb(model, TabooSet(lower=0, upper=6)).targets == (0, 6)


def test_transient_queue_has_defective_passage() -> None:
    model = make_model("mm_queue", {"lambda": 2.0, "mu": 1.0, "c": 1})

    curve = fpt_cdf(model, 1, None, [5.0, 50.0])

    assert curve.total_mass == pytest.approx(ruin_probability(2.0, 1.0, 1), abs=1e-10)
    assert curve.cdf[-1] <= 0.5 + curve.err[-1] + 1e-9
    assert any("defective" in message for message in curve.warnings)


def test_moran_without_back_mutation_can_fix_before_extinction() -> None:
    model = make_model("moran", {"N": 50, "fitness_1": 0.5, "fitness_2": 1.0, "u": 0.0, "v": 0.05})

    mass = absorption_probability(model, 45)

    assert 0.0 < mass < 1.0 - 1e-3


def test_busy_period_density_matches_bessel_form() -> None:
    model = make_model("mm_queue", {"lambda": 0.5, "mu": 1.0, "c": 1})
    grid = np.arange(0.5, 20.5, 0.5)

    curve = fpt_density(model, 1, None, grid)

    np.testing.assert_allclose(curve.density, kendall_reference_density(0.5, 1.0, 1, grid), atol=1e-7)


def test_cdf_is_monotone_and_consistent_with_density() -> None:
    model = make_model("mm_queue", {"lambda": 2.0, "mu": 1.0})
    grid = np.round(np.arange(1.0, 3.0 + 1e-9, 0.01), 10)

    cdf = fpt_cdf(model, 4, None, grid)
    density = fpt_density(model, 4, None, grid)

    assert np.all(np.diff(cdf.cdf) >= -cdf.err[1:] - cdf.err[:-1])
    assert np.all((cdf.cdf >= -cdf.err) & (cdf.cdf <= 1.0 + cdf.err))
    slope = (cdf.cdf[2:] - cdf.cdf[:-2]) / 0.02
    np.testing.assert_allclose(slope, density.density[1:-1], atol=1e-4)


def test_transition_curve_keeps_taboo_states_open() -> None:
    model = BdpModel(
        birth=constant_rate(0.3),
        death=ExpressionRate("min(n,1)*1.2", {}),
        taboo=TabooSet(lower=0),
        state_cap=1,
    )

    curve = transition_curve(model, 0, 0, [2.0])

    expected = 1.2 / 1.5 + 0.3 / 1.5 * math.exp(-3.0)
    assert curve.cdf[0] == pytest.approx(expected, abs=1e-8)


def test_start_inside_taboo_set_is_rejected() -> None:
    model = make_model("kendall", {"lambda": 0.1, "mu": 0.5})

    with pytest.raises(PreconditionError):
        fpt_cdf(model, 0, None, [1.0])
    with pytest.raises(PreconditionError):
        fpt_cdf(model, 7, TabooSet(lower=0, upper=5), [1.0])


def test_unreachable_barriers_are_a_model_error() -> None:
    model = make_model("sis", {"N": 10, "lambda": 0.5, "mu": 1.0})

    with pytest.raises(ModelError):
        absorb(model, TabooSet(upper=20))


def test_quadratic_pure_birth_explodes() -> None:
    report = explosion_check(_custom("(n+1)^2", "0"))

    assert report.verdict is ExplosionVerdict.EXPLOSIVE
    assert report.expected_passage_to_infinity == pytest.approx(math.pi**2 / 6.0, abs=1e-4)
    assert report.partial_sum_trace == sorted(report.partial_sum_trace)
    assert report.decay_exponent == pytest.approx(2.0, abs=0.05)


def test_linear_birth_does_not_explode() -> None:
    report = explosion_check(_custom("n+1", "0"))

    assert report.verdict is ExplosionVerdict.NON_EXPLOSIVE
    assert math.isinf(report.expected_passage_to_infinity)


def test_subcritical_kendall_and_finite_chains_do_not_explode() -> None:
    kendall = explosion_check(make_model("kendall", {"lambda": 0.1, "mu": 0.5}))
    moran = explosion_check(make_model("moran", {"N": 20, "fitness_1": 1.0, "fitness_2": 1.0, "u": 0.0, "v": 0.01}))

    assert kendall.verdict is ExplosionVerdict.NON_EXPLOSIVE
    assert kendall.start_state == 1
    assert moran.verdict is ExplosionVerdict.NON_EXPLOSIVE
    assert moran.to_dict()["verdict"] == "non_explosive"


def test_births_vanishing_above_the_start_cap_the_chain() -> None:
    model = _custom("2*max(0, min(1, 11-n))", "n")

    report = explosion_check(model)

    assert report.verdict is ExplosionVerdict.NON_EXPLOSIVE
    assert math.isinf(report.expected_passage_to_infinity)
    assert report.start_state == 0


def test_chain_without_births_does_not_explode() -> None:
    report = explosion_check(_custom("0", "n"))

    assert report.verdict is ExplosionVerdict.NON_EXPLOSIVE


def test_explosion_check_needs_two_terms() -> None:
    with pytest.raises(PreconditionError):
        explosion_check(_custom("n+1", "0"), terms=1)
