import math
import threading

import numpy as np
import pytest

from bdp_integrals.core.contfrac import (
    ContFrac,
    LentzState,
    RateTable,
    denominator_ratio,
    floor_tiny,
    lentz_eval,
    truncation_bound,
)
from bdp_integrals.core.modelspec import make_model
from bdp_integrals.errors import ConvergenceError, PreconditionError

from oracles import wallis_denominator, wallis_value


def _queue_fraction(s, lam: float = 2.0, mu: float = 1.0) -> ContFrac:
    model = make_model("mm_queue", {"lambda": lam, "mu": mu})
    return ContFrac.birth_death(model, s)


def test_periodic_fraction_converges_to_golden_ratio() -> None:
    result = lentz_eval(ContFrac.periodic(1.0, 1.0), tol=1e-14)

    assert result.converged_value.real == pytest.approx((math.sqrt(5.0) - 1.0) / 2.0, abs=1e-13)
    assert not bool(result.rigorous)


def test_finite_fraction_terminates_exactly() -> None:
    cf = ContFrac.from_terms([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])
    result = lentz_eval(cf, tol=1e-3)

    # 1/(1 + 2/(1 + 3/1)) = 2/3
    assert result.converged_value.real == pytest.approx(2.0 / 3.0, rel=1e-14)
    assert float(result.err_est) == 0.0
    assert result.depth == 3


def test_vanishing_numerator_ends_the_fraction() -> None:
    terms = [1.0, 0.0, 5.0]
    cf = ContFrac(a=lambda k: terms[k - 1] if k <= 3 else 1.0, b=lambda k: 2.0)

    assert lentz_eval(cf, tol=1e-12).converged_value == pytest.approx(0.5)
    empty = ContFrac(a=lambda k: 0.0, b=lambda k: 1.0)
    assert lentz_eval(empty, tol=1e-12).converged_value == 0.0


def test_lentz_agrees_with_extended_precision_wallis() -> None:
    s = np.array([0.5 + 0.0j, 1.0 + 2.0j, 3.0 - 7.5j, 0.1 + 40.0j])
    base = _queue_fraction(s)
    cf = ContFrac(a=base.a, b=base.b, length=25)

    lentz = lentz_eval(cf, tol=1e-300)
    wallis = wallis_value(cf, 25)

    np.testing.assert_allclose(lentz.value, wallis, rtol=1e-12)


def test_lentz_stop_is_within_its_bound_of_a_deeper_wallis_convergent() -> None:
    s = np.array([1.0 + 2.0j, 0.5 + 10.0j, 3.0 - 7.5j])
    cf = ContFrac.birth_death(make_model("kendall", {"lambda": 0.1, "mu": 0.5}), s)

    lentz = lentz_eval(cf, tol=1e-12)
    wallis = wallis_value(cf, lentz.depth + 50)

    assert np.all(lentz.rigorous)
    assert np.all(np.abs(lentz.value - wallis) <= 2.0 * lentz.err_est + 1e-13 * np.abs(wallis))


def test_lentz_d_is_the_wallis_denominator_ratio() -> None:
    s = np.asarray(0.7 + 1.3j)
    cf = _queue_fraction(s)
    state = LentzState.start(s.shape)
    for k in range(1, 7):
        state.advance(*cf.terms(k))

    expected = wallis_denominator(cf, 5) / wallis_denominator(cf, 6)
    assert complex(state.D) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("m", [1, 5, 12])
def test_denominator_ratio_matches_direct_quotient(m: int) -> None:
    s = np.asarray(0.7 + 1.3j)
    cf = _queue_fraction(s)
    D = wallis_denominator(cf, m) / wallis_denominator(cf, m + 1)

    for j in range(0, 7):
        direct = wallis_denominator(cf, m + j) / wallis_denominator(cf, m)
        assert complex(denominator_ratio(cf, m, j, D)) == pytest.approx(direct, rel=1e-10)


def test_denominator_ratio_rejects_negative_offset() -> None:
    with pytest.raises(PreconditionError):
        denominator_ratio(_queue_fraction(1.0 + 1.0j), 3, -1, 0.5)


def test_truncation_bound_holds_at_random_contour_points() -> None:
    rng = np.random.default_rng(7)
    real = rng.uniform(0.05, 5.0, size=100)
    imag = rng.uniform(0.2, 30.0, size=100) * rng.choice([-1.0, 1.0], size=100)
    s = real + 1j * imag
    cf = _queue_fraction(s, lam=0.4, mu=0.6)

    shallow = lentz_eval(cf, tol=1e-6)
    deep = lentz_eval(cf, tol=1e-14, raise_on_failure=False)

    assert np.all(shallow.rigorous)
    assert np.all(np.abs(shallow.value - deep.value) <= shallow.err_est + 1e-12)
    assert np.all(shallow.err_est <= 1e-6)


def test_truncation_bound_is_flagged_non_rigorous_on_the_real_axis() -> None:
    bound, rigorous = truncation_bound(np.array([0.5 + 0.0j, 0.5 + 0.5j]), np.array([1e-3, 1e-3]))

    assert not rigorous[0] and rigorous[1]
    assert bound[0] == pytest.approx(1e-3)
    # 1/D = 1 - 1j, so |1/D| / |Im(1/D)| = sqrt(2)
    assert bound[1] == pytest.approx(math.sqrt(2.0) * 1e-3)


def test_depth_limit_raises_with_best_estimate() -> None:
    slow = ContFrac(a=lambda k: -1.0 * k * k, b=lambda k: 2.0 * k + 0.001j)

    with pytest.raises(ConvergenceError) as excinfo:
        lentz_eval(slow, tol=1e-15, max_depth=20)
    assert excinfo.value.err_est is not None and excinfo.value.err_est > 1e-15
    assert excinfo.value.value is not None


def test_tolerance_must_be_positive() -> None:
    with pytest.raises(PreconditionError):
        lentz_eval(ContFrac.periodic(1.0, 1.0), tol=0.0)


def test_floor_tiny_keeps_phase() -> None:
    floored = floor_tiny(np.array([0.0 + 0.0j, 1e-40j, 2.0 + 0.0j]))

    assert floored[0] == pytest.approx(1e-30)
    assert floored[1] == pytest.approx(1e-30j)
    assert floored[2] == 2.0


def test_birth_death_fraction_terms_and_length() -> None:
    model = make_model("sis", {"N": 10, "lambda": 0.1, "mu": 1.0})
    cf = ContFrac.birth_death(model, 2.0)

    assert cf.length == 11
    assert cf.a(1) == 1.0
    assert complex(cf.b(1)) == 2.0
    # a_3 = -lambda_1 mu_2, b_3 = s + lambda_2 + mu_2
    assert cf.a(3) == pytest.approx(-0.1 * 9 * 2.0)
    assert complex(cf.b(3)) == pytest.approx(2.0 + 0.1 * 2 * 8 + 2.0)


def test_rate_table_grows_consistently_across_threads() -> None:
    model = make_model("kendall", {"lambda": 0.1, "mu": 0.5})
    table = RateTable(model, with_rewards=True)
    seen = []

    def read(n: int) -> None:
        seen.append((n, table.lam(n), table.mu(n), table.reward(n)))

    workers = [threading.Thread(target=read, args=(n,)) for n in (5, 2000, 4500, 17)]
    for worker in workers:
        worker.start()
    for worker in workers:
        worker.join()

    for n, lam, mu, reward in seen:
        assert lam == pytest.approx(0.1 * n)
        assert mu == pytest.approx(0.5 * n)
        assert reward == n
    assert table.lam(-1) == 0.0


def test_rate_table_without_rewards_refuses_reward_lookup() -> None:
    table = RateTable(make_model("kendall", {"lambda": 0.1, "mu": 0.5}))

    with pytest.raises(PreconditionError):
        table.reward(3)
