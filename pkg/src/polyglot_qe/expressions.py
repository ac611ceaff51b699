"""
Binding and evaluation of SQL expressions over mediator rows.

compile_expr() resolves column references against a Scope, type-checks the
tree and returns a BoundExpr whose evaluate(row) follows SQL three-valued
logic: predicates yield True, False or None (unknown), and filters keep a row
only when the result is True.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import (
    AmbiguousColumnError,
    CoercionError,
    ExecutionError,
    PlanningError,
    TypeMismatchError,
    UnknownColumnError,
)
from .relmodel import ScalarType, Timestamp, Value, coerce, compare, is_number, type_of
from .sql_ast import (
    AggCall,
    Arithmetic,
    ColumnRef,
    Comparison,
    Expr,
    InList,
    IsNull,
    Literal,
    Logical,
    Not,
    Star,
    UnaryMinus,
)
from .sql_render import render_expr
from .wrapper import Predicate

Evaluator = Callable[[Tuple[Value, ...]], Value]

FLIPPED = {"=": "=", "<>": "<>", "<": ">", "<=": ">=", ">": "<", ">=": "<="}
NEGATED = {"=": "<>", "<>": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


@dataclass(frozen=True)
class Field:
    """One column of an operator's output."""

    name: str
    type: Optional[ScalarType]
    binding: Optional[str] = None


class Scope:
    """Ordered fields visible to expressions, addressable as name or binding.name."""

    def __init__(self, fields: Sequence[Field]):
        self.fields: Tuple[Field, ...] = tuple(fields)

    def __len__(self) -> int:
        return len(self.fields)

    def __add__(self, other: "Scope") -> "Scope":
        return Scope(self.fields + other.fields)

    @property
    def bindings(self) -> List[str]:
        seen: List[str] = []
        for f in self.fields:
            if f.binding is not None and f.binding not in seen:
                seen.append(f.binding)
        return seen

    def positions(self, binding: str) -> List[int]:
        return [i for i, f in enumerate(self.fields) if f.binding == binding]

    def resolve(self, ref: ColumnRef) -> int:
        if ref.table is not None:
            if ref.table not in self.bindings:
                raise UnknownColumnError(f"missing FROM-clause entry for table {ref.table!r}")
            matches = [i for i, f in enumerate(self.fields) if f.binding == ref.table and f.name == ref.name]
        else:
            matches = [i for i, f in enumerate(self.fields) if f.name == ref.name]
        if not matches:
            raise UnknownColumnError(f"column {render_expr(ref)!r} does not exist")
        if len(matches) > 1:
            raise AmbiguousColumnError(f"column reference {ref.name!r} is ambiguous")
        return matches[0]


@dataclass(frozen=True)
class BoundExpr:
    evaluate: Evaluator
    type: Optional[ScalarType]
    text: str


def aggregate_type(call: AggCall, arg_type: Optional[ScalarType]) -> Optional[ScalarType]:
    if call.func == "COUNT":
        return ScalarType.BIGINT
    if call.func in ("SUM", "AVG"):
        if arg_type is not None and not arg_type.is_numeric:
            raise TypeMismatchError(f"{call.func} needs a numeric argument, got {arg_type.value}")
        if call.func == "AVG":
            return ScalarType.DOUBLE
        return ScalarType.BIGINT if arg_type is not None and arg_type.is_integer else ScalarType.DOUBLE
    return arg_type


def _comparable(left: Optional[ScalarType], right: Optional[ScalarType]) -> bool:
    if left is None or right is None or left is right:
        return True
    return left.is_numeric and right.is_numeric


def _literal_as(expr: Expr, target: Optional[ScalarType]) -> Expr:
    """Text literals compared with timestamps are read as timestamps."""
    if target is ScalarType.TIMESTAMP and isinstance(expr, Literal) and isinstance(expr.value, str):
        try:
            return Literal(Timestamp.parse(expr.value))
        except ValueError as exc:
            raise TypeMismatchError(str(exc)) from exc
    return expr


def divide(left: Value, right: Value) -> Value:
    if right == 0:
        raise ExecutionError("division by zero")
    if isinstance(left, int) and isinstance(right, int):
        quotient = abs(left) // abs(right)
        return quotient if (left >= 0) == (right >= 0) else -quotient
    return left / right


def _arithmetic(op: str, left: Value, right: Value) -> Value:
    if left is None or right is None:
        return None
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    return divide(left, right)


def comparison_holds(op: str, order: Optional[int]) -> Optional[bool]:
    if order is None:
        return None
    if op == "=":
        return order == 0
    if op == "<>":
        return order != 0
    if op == "<":
        return order < 0
    if op == "<=":
        return order <= 0
    if op == ">":
        return order > 0
    return order >= 0


def in_list(value: Value, items: Iterable[Value]) -> Optional[bool]:
    if value is None:
        return None
    unknown = False
    for item in items:
        order = compare(value, item)
        if order == 0:
            return True
        if order is None:
            unknown = True
    return None if unknown else False


def predicate_holds(value: Value, predicate: Predicate) -> bool:
    """Filter outcome of a pushed-down style predicate on a single value."""
    if predicate.op == "IN":
        return in_list(value, predicate.value) is True
    return comparison_holds(predicate.op, compare(value, predicate.value)) is True


def _and(left: Optional[bool], right: Optional[bool]) -> Optional[bool]:
    if left is False or right is False:
        return False
    if left is None or right is None:
        return None
    return True


def _or(left: Optional[bool], right: Optional[bool]) -> Optional[bool]:
    if left is True or right is True:
        return True
    if left is None or right is None:
        return None
    return False


def _not(value: Optional[bool]) -> Optional[bool]:
    return None if value is None else not value


def compile_expr(expr: Expr, scope: Scope, substitutions: Optional[Dict[Expr, int]] = None) -> BoundExpr:
    """Bind expr to positions in scope; substitutions map whole sub-trees to positions."""
    substitutions = substitutions or {}
    text = render_expr(expr)

    if expr in substitutions:
        position = substitutions[expr]
        return BoundExpr(lambda row: row[position], scope.fields[position].type, text)

    if isinstance(expr, ColumnRef):
        if substitutions:
            # after grouping only grouped columns and aggregates are visible
            raise PlanningError(f"column {text!r} must appear in the GROUP BY clause or be used in an aggregate")
        position = scope.resolve(expr)
        return BoundExpr(lambda row: row[position], scope.fields[position].type, text)

    if isinstance(expr, Literal):
        value = expr.value
        literal_type = type_of(value)
        return BoundExpr(
            lambda row: value, literal_type if isinstance(literal_type, ScalarType) else None, text
        )

    if isinstance(expr, Star):
        raise PlanningError("'*' is only allowed in the select list or COUNT(*)")

    if isinstance(expr, AggCall):
        raise PlanningError(f"aggregate {text} is not allowed here")

    if isinstance(expr, UnaryMinus):
        operand = compile_expr(expr.operand, scope, substitutions)
        if operand.type is not None and not operand.type.is_numeric:
            raise TypeMismatchError(f"cannot negate {operand.type.value} value in {text}")
        inner = operand.evaluate
        return BoundExpr(lambda row: None if inner(row) is None else -inner(row), operand.type, text)

    if isinstance(expr, Arithmetic):
        left = compile_expr(expr.left, scope, substitutions)
        right = compile_expr(expr.right, scope, substitutions)
        for side in (left, right):
            if side.type is not None and not side.type.is_numeric:
                raise TypeMismatchError(f"operator {expr.op} needs numeric operands in {text}")
        if left.type is None or right.type is None:
            result_type = left.type or right.type
        elif left.type.is_integer and right.type.is_integer:
            result_type = ScalarType.BIGINT
        else:
            result_type = ScalarType.DOUBLE
        op, lhs, rhs = expr.op, left.evaluate, right.evaluate
        return BoundExpr(lambda row: _arithmetic(op, lhs(row), rhs(row)), result_type, text)

    if isinstance(expr, Comparison):
        left = compile_expr(expr.left, scope, substitutions)
        right = compile_expr(expr.right, scope, substitutions)
        if left.type is ScalarType.TIMESTAMP or right.type is ScalarType.TIMESTAMP:
            left = compile_expr(_literal_as(expr.left, right.type), scope, substitutions)
            right = compile_expr(_literal_as(expr.right, left.type), scope, substitutions)
        if not _comparable(left.type, right.type):
            raise TypeMismatchError(
                f"cannot compare {left.type.value} with {right.type.value} in {text}"  # type: ignore[union-attr]
            )
        op, lhs, rhs = expr.op, left.evaluate, right.evaluate
        return BoundExpr(lambda row: comparison_holds(op, compare(lhs(row), rhs(row))), ScalarType.BOOL, text)

    if isinstance(expr, InList):
        operand = compile_expr(expr.operand, scope, substitutions)
        items = [compile_expr(_literal_as(item, operand.type), scope, substitutions) for item in expr.items]
        for item in items:
            if not _comparable(operand.type, item.type):
                raise TypeMismatchError(f"IN list item of type {item.type.value} in {text}")  # type: ignore[union-attr]
        value_of = operand.evaluate
        item_evaluators = [item.evaluate for item in items]
        negated = expr.negated

        def evaluate_in(row: Tuple[Value, ...]) -> Optional[bool]:
            result = in_list(value_of(row), (f(row) for f in item_evaluators))
            return _not(result) if negated else result

        return BoundExpr(evaluate_in, ScalarType.BOOL, text)

    if isinstance(expr, IsNull):
        operand = compile_expr(expr.operand, scope, substitutions)
        value_of = operand.evaluate
        if expr.negated:
            return BoundExpr(lambda row: value_of(row) is not None, ScalarType.BOOL, text)
        return BoundExpr(lambda row: value_of(row) is None, ScalarType.BOOL, text)

    if isinstance(expr, Logical):
        left = _predicate(expr.left, scope, substitutions)
        right = _predicate(expr.right, scope, substitutions)
        lhs, rhs = left.evaluate, right.evaluate
        if expr.op == "AND":
            return BoundExpr(lambda row: _and(lhs(row), rhs(row)), ScalarType.BOOL, text)
        return BoundExpr(lambda row: _or(lhs(row), rhs(row)), ScalarType.BOOL, text)

    if isinstance(expr, Not):
        operand = _predicate(expr.operand, scope, substitutions)
        value_of = operand.evaluate
        return BoundExpr(lambda row: _not(value_of(row)), ScalarType.BOOL, text)

    raise PlanningError(f"unsupported expression {text}")


def _predicate(expr: Expr, scope: Scope, substitutions: Optional[Dict[Expr, int]]) -> BoundExpr:
    bound = compile_expr(expr, scope, substitutions)
    if bound.type not in (None, ScalarType.BOOL):
        raise TypeMismatchError(f"argument of boolean operator must be boolean: {bound.text}")
    return bound


def compile_predicate(expr: Expr, scope: Scope, substitutions: Optional[Dict[Expr, int]] = None) -> BoundExpr:
    """Like compile_expr, but the result must be a boolean."""
    return _predicate(expr, scope, substitutions)


def constant_value(expr: Expr) -> Tuple[bool, Value]:
    """(True, value) when expr is a literal or a negated numeric literal."""
    if isinstance(expr, Literal):
        return True, expr.value
    if isinstance(expr, UnaryMinus) and isinstance(expr.operand, Literal) and is_number(expr.operand.value):
        return True, -expr.operand.value
    return False, None


def literal_for_column(value: Value, column_type: ScalarType) -> Tuple[bool, Any]:
    """Convert a literal to the column's type when that loses nothing."""
    if value is None:
        return False, None
    try:
        converted = coerce(value, column_type)
    except CoercionError:
        return False, None
    if is_number(value) and is_number(converted) and converted != value:
        return False, None
    if isinstance(value, str) and column_type is not ScalarType.TEXT and column_type is not ScalarType.TIMESTAMP:
        return False, None
    return True, converted
