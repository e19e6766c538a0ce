import numpy as np
import pytest

from bdp_integrals.core.expressions import BinaryOp, Negate, Parameter, Variable, parse_rate_expr, unparse
from bdp_integrals.errors import ExpressionError, RateEvaluationError


def test_logistic_birth_rate_matches_numpy() -> None:
    expr = parse_rate_expr("n*(N-n)*lambda", {"N": 100, "lambda": 0.1})
    ns = np.arange(0, 101)

    np.testing.assert_allclose(expr.values(ns), ns * (100 - ns) * 0.1)
    assert expr(50) == pytest.approx(250.0)


def test_power_binds_tighter_than_unary_minus() -> None:
    expr = parse_rate_expr("-n^2")

    assert isinstance(expr.root, Negate)
    assert expr(3) == -9.0


def test_operators_are_left_associative() -> None:
    assert parse_rate_expr("2^3^2")(0) == 64.0
    assert parse_rate_expr("8-4-2")(0) == 2.0
    assert parse_rate_expr("16/4/2")(0) == 2.0


def test_identifiers_resolve_to_state_and_parameters() -> None:
    expr = parse_rate_expr("mu*n", {"mu": 0.5})

    assert expr.root == BinaryOp("*", Parameter("mu"), Variable())


def test_min_max_functions() -> None:
    expr = parse_rate_expr("min(n, c)*mu + max(0, n-3)", {"c": 2, "mu": 1.5})

    np.testing.assert_allclose(expr.values(np.arange(6)), [0.0, 1.5, 3.0, 3.0, 4.0, 5.0])


def test_unparse_reparses_to_the_same_tree() -> None:
    params = {"a": 0.1, "b": 0.3, "eps": 2.0}
    for source in ("a*eps + b*n", "-(n - 1)^2 / (1 + n)", "max(n, 2.5e-1) - -n"):
        expr = parse_rate_expr(source, params)
        again = parse_rate_expr(unparse(expr.root), params)
        assert again.root == expr.root


def test_syntax_error_reports_byte_offset() -> None:
    with pytest.raises(ExpressionError) as excinfo:
        parse_rate_expr("n + * 2")
    assert excinfo.value.offset == 4
    assert "offset 4" in str(excinfo.value)


def test_truncated_expression_points_at_end() -> None:
    with pytest.raises(ExpressionError) as excinfo:
        parse_rate_expr("n*")
    assert excinfo.value.offset == 2


def test_unknown_identifier_is_rejected() -> None:
    with pytest.raises(ExpressionError) as excinfo:
        parse_rate_expr("n*gamma", {"mu": 1.0})
    assert "gamma" in str(excinfo.value)
    assert excinfo.value.offset == 2


def test_function_arity_is_checked() -> None:
    with pytest.raises(ExpressionError):
        parse_rate_expr("min(n)")
    with pytest.raises(ExpressionError):
        parse_rate_expr("sqrt(n)")


def test_empty_expression_is_rejected() -> None:
    with pytest.raises(ExpressionError):
        parse_rate_expr("   ")


def test_division_by_zero_names_the_state() -> None:
    expr = parse_rate_expr("1/(n-2)")

    with pytest.raises(RateEvaluationError, match="Division by zero at n=2"):
        expr.values(np.arange(5))
