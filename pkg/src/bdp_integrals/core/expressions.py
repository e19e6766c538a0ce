"""
Arithmetic mini-language for stating birth, death and reward rates as text.

Expressions range over the state variable ``n`` and named parameters, e.g.
``"n*(N-n)*lambda"`` or ``"min(n,c)*mu"``. All binary operators are
left-associative and ``^`` binds tightest, so ``-n^2`` is ``-(n^2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from types import MappingProxyType
from typing import Callable, Dict, Mapping, Tuple, Union

import numpy as np
from lark import Lark, Token, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken, VisitError

from bdp_integrals.errors import ExpressionError, RateEvaluationError

logger = logging.getLogger(__name__)

STATE_VARIABLE = "n"

_GRAMMAR = r"""
?start: sum

?sum: product
    | sum "+" product   -> add
    | sum "-" product   -> sub

?product: unary
    | product "*" unary -> mul
    | product "/" unary -> div

?unary: power
    | "-" unary         -> neg

?power: atom
    | power "^" atom    -> pow

?atom: NUMBER                      -> number
     | NAME "(" [arguments] ")"    -> call
     | NAME                        -> name
     | "(" sum ")"

arguments: sum ("," sum)*

%import common.NUMBER
%import common.CNAME -> NAME
%import common.WS
%ignore WS
"""


@dataclass(frozen=True, slots=True)
class Constant:
    value: float


@dataclass(frozen=True, slots=True)
class Variable:
    name: str = STATE_VARIABLE


@dataclass(frozen=True, slots=True)
class Parameter:
    name: str


@dataclass(frozen=True, slots=True)
class BinaryOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True, slots=True)
class Negate:
    operand: "Node"


@dataclass(frozen=True, slots=True)
class Call:
    func: str
    args: Tuple["Node", ...]


Node = Union[Constant, Variable, Parameter, BinaryOp, Negate, Call]

_FUNCTIONS: Dict[str, Tuple[int, Callable[..., np.ndarray]]] = {
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}


def _byte_offset(source: str, char_pos: int) -> int:
    return len(source[:char_pos].encode("utf-8"))


@v_args(inline=True)
class _AstBuilder(Transformer):
    """Turns the lark parse tree into frozen AST nodes, resolving identifiers."""

    def __init__(self, source: str, params: Mapping[str, float]) -> None:
        super().__init__()
        self._source = source
        self._params = params

    def number(self, token: Token) -> Constant:
        return Constant(float(token))

    def name(self, token: Token) -> Node:
        ident = str(token)
        if ident == STATE_VARIABLE:
            return Variable()
        if ident in self._params:
            return Parameter(ident)
        raise ExpressionError(
            f"Unknown identifier '{ident}'", offset=_byte_offset(self._source, token.start_pos)
        )

    def call(self, token: Token, arguments: list | None) -> Call:
        func = str(token)
        args = tuple(arguments or ())
        offset = _byte_offset(self._source, token.start_pos)
        if func not in _FUNCTIONS:
            raise ExpressionError(f"Unknown function '{func}'", offset=offset)
        arity = _FUNCTIONS[func][0]
        if len(args) != arity:
            raise ExpressionError(
                f"Function '{func}' takes {arity} arguments, got {len(args)}", offset=offset
            )
        return Call(func, args)

    def arguments(self, *items: Node) -> list:
        return list(items)

    def neg(self, operand: Node) -> Negate:
        return Negate(operand)

    def add(self, left: Node, right: Node) -> BinaryOp:
        return BinaryOp("+", left, right)

    def sub(self, left: Node, right: Node) -> BinaryOp:
        return BinaryOp("-", left, right)

    def mul(self, left: Node, right: Node) -> BinaryOp:
        return BinaryOp("*", left, right)

    def div(self, left: Node, right: Node) -> BinaryOp:
        return BinaryOp("/", left, right)

    def pow(self, left: Node, right: Node) -> BinaryOp:
        return BinaryOp("^", left, right)


@lru_cache(maxsize=1)
def _parser() -> Lark:
    return Lark(_GRAMMAR, parser="lalr", maybe_placeholders=True)


def _syntax_offset(source: str, exc: UnexpectedInput) -> int:
    if isinstance(exc, UnexpectedEOF):
        return len(source.encode("utf-8"))
    if isinstance(exc, UnexpectedToken) and exc.token.type == "$END":
        return len(source.encode("utf-8"))
    if isinstance(exc, (UnexpectedCharacters, UnexpectedToken)):
        return _byte_offset(source, exc.pos_in_stream)
    return len(source.encode("utf-8"))


@dataclass(frozen=True)
class RateExpr:
    """A parsed rate expression with its parameter bindings."""

    source: str
    root: Node
    params: Mapping[str, float] = field(default_factory=dict)

    def __call__(self, n: int | float) -> float:
        return float(self.values(np.asarray([n], dtype=float))[0])

    def values(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=float)
        with np.errstate(all="ignore"):
            result = np.broadcast_to(_evaluate(self.root, ns, self.params), ns.shape).astype(float)
        bad = ~np.isfinite(result)
        if bad.any():
            at = ns[np.argmax(bad)]
            raise RateEvaluationError(f"Expression '{self.source}' is not finite at n={at:g}")
        return result

    def unparse(self) -> str:
        return unparse(self.root)


def _evaluate(node: Node, ns: np.ndarray, params: Mapping[str, float]) -> np.ndarray:
    if isinstance(node, Constant):
        return np.asarray(node.value, dtype=float)
    if isinstance(node, Variable):
        return ns
    if isinstance(node, Parameter):
        return np.asarray(float(params[node.name]), dtype=float)
    if isinstance(node, Negate):
        return -_evaluate(node.operand, ns, params)
    if isinstance(node, Call):
        func = _FUNCTIONS[node.func][1]
        return func(*(_evaluate(arg, ns, params) for arg in node.args))

    left = _evaluate(node.left, ns, params)
    right = _evaluate(node.right, ns, params)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "^":
        return np.power(left, right)
    zero = np.broadcast_to(right == 0, np.broadcast(left, right, ns).shape)
    if zero.any():
        at = np.broadcast_to(ns, zero.shape)[np.argmax(zero)]
        raise RateEvaluationError(f"Division by zero at n={at:g}")
    return left / right


def unparse(node: Node) -> str:
    """Render an AST back to source; parsing the result yields the same AST."""

    if isinstance(node, Constant):
        return repr(float(node.value))
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, Parameter):
        return node.name
    if isinstance(node, Negate):
        return f"(-{unparse(node.operand)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(unparse(arg) for arg in node.args)})"
    return f"({unparse(node.left)} {node.op} {unparse(node.right)})"


def parse_rate_expr(source: str, params: Mapping[str, float] | None = None) -> RateExpr:
    """
    Parse ``source`` into a :class:`RateExpr` bound to ``params``.

    Raises :class:`ExpressionError` carrying the byte offset of the failure for
    syntax errors, unknown identifiers and wrong min/max arity.
    """

    if not source or not source.strip():
        raise ExpressionError("Rate expression is empty", offset=0)
    bound = MappingProxyType({name: float(value) for name, value in (params or {}).items()})

    try:
        tree = _parser().parse(source)
    except UnexpectedInput as exc:
        raise ExpressionError("Syntax error", offset=_syntax_offset(source, exc)) from exc

    try:
        root = _AstBuilder(source, bound).transform(tree)
    except VisitError as exc:
        if isinstance(exc.orig_exc, ExpressionError):
            raise exc.orig_exc from None
        raise
    logger.debug("Parsed rate expression %r as %s", source, unparse(root))
    return RateExpr(source=source, root=root, params=bound)
