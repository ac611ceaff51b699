"""
Syntax tree for the SQL dialect.

All nodes are frozen dataclasses holding tuples, so trees compare structurally
and can be used as dictionary keys (the planner matches GROUP BY expressions
and aggregate calls that way).
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

from .relmodel import ScalarType, Value

COMPARISON_OPS = ("=", "<>", "<", "<=", ">", ">=")
ARITHMETIC_OPS = ("+", "-", "*", "/")
AGGREGATE_FUNCS = ("COUNT", "SUM", "AVG", "MIN", "MAX")

Options = Tuple[Tuple[str, str], ...]


@dataclass(frozen=True)
class QualifiedName:
    name: str
    schema: Optional[str] = None

    def __str__(self) -> str:
        return f"{self.schema}.{self.name}" if self.schema else self.name


class Expr:
    """Marker base class for expressions."""

    __slots__ = ()


@dataclass(frozen=True)
class ColumnRef(Expr):
    name: str
    table: Optional[str] = None


@dataclass(frozen=True, eq=False)
class Literal(Expr):
    value: Value

    def _key(self) -> tuple:
        return (type(self.value), self.value)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Literal) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())


@dataclass(frozen=True)
class Star(Expr):
    table: Optional[str] = None


@dataclass(frozen=True)
class UnaryMinus(Expr):
    operand: Expr


@dataclass(frozen=True)
class Arithmetic(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Comparison(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class InList(Expr):
    operand: Expr
    items: Tuple[Expr, ...]
    negated: bool = False


@dataclass(frozen=True)
class IsNull(Expr):
    operand: Expr
    negated: bool = False


@dataclass(frozen=True)
class Logical(Expr):
    op: str  # AND | OR
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Not(Expr):
    operand: Expr


@dataclass(frozen=True)
class AggCall(Expr):
    func: str
    arg: Optional[Expr] = None  # None means COUNT(*)
    distinct: bool = False


@dataclass(frozen=True)
class SelectItem:
    expr: Expr
    alias: Optional[str] = None


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    descending: bool = False


@dataclass(frozen=True)
class TableRef:
    name: QualifiedName
    alias: Optional[str] = None

    @property
    def binding(self) -> str:
        return self.alias or self.name.name


@dataclass(frozen=True)
class Join:
    left: "FromItem"
    right: TableRef
    condition: Expr


FromItem = Union[TableRef, Join]


@dataclass(frozen=True)
class Query:
    select_items: Tuple[SelectItem, ...]
    distinct: bool = False
    from_items: Tuple[FromItem, ...] = ()
    where: Optional[Expr] = None
    group_by: Tuple[Expr, ...] = ()
    having: Optional[Expr] = None
    order_by: Tuple[OrderItem, ...] = ()
    limit: Optional[int] = None


# DDL pieces


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    type: ScalarType
    options: Options = ()


@dataclass(frozen=True)
class OptionChange:
    action: str  # ADD | SET | DROP
    name: str
    value: Optional[str] = None


@dataclass(frozen=True)
class AlterColumnOptions:
    column: str
    changes: Tuple[OptionChange, ...]


@dataclass(frozen=True)
class AlterColumnType:
    column: str
    type: ScalarType


@dataclass(frozen=True)
class AddColumn:
    column: ColumnSpec


@dataclass(frozen=True)
class DropColumn:
    column: str


@dataclass(frozen=True)
class AlterTableOptions:
    changes: Tuple[OptionChange, ...]


AlterAction = Union[AlterColumnOptions, AlterColumnType, AddColumn, DropColumn, AlterTableOptions]


# Statements


class Statement:
    __slots__ = ()


@dataclass(frozen=True)
class Select(Statement):
    query: Query


@dataclass(frozen=True)
class Explain(Statement):
    query: Query


@dataclass(frozen=True)
class CreateForeignTable(Statement):
    name: QualifiedName
    columns: Tuple[ColumnSpec, ...]
    server: str
    options: Options = ()


@dataclass(frozen=True)
class AlterForeignTable(Statement):
    name: QualifiedName
    actions: Tuple[AlterAction, ...]


@dataclass(frozen=True)
class DropForeignTable(Statement):
    name: QualifiedName
    if_exists: bool = False


@dataclass(frozen=True)
class CreateServer(Statement):
    name: str
    kind: str
    options: Options = ()


@dataclass(frozen=True)
class ImportForeignSchema(Statement):
    remote_schema: str
    server: str
    local_schema: str
    options: Options = ()


@dataclass(frozen=True)
class CreateMaterializedView(Statement):
    name: QualifiedName
    query: Query
    refresh_interval: Optional[int] = None


@dataclass(frozen=True)
class RefreshMaterializedView(Statement):
    name: QualifiedName


@dataclass(frozen=True)
class DropMaterializedView(Statement):
    name: QualifiedName
    if_exists: bool = False


DDL_STATEMENTS = (
    CreateForeignTable,
    AlterForeignTable,
    DropForeignTable,
    CreateServer,
    ImportForeignSchema,
)


def walk(expr: Expr):
    """Yield expr and all of its sub-expressions, parents first."""
    yield expr
    if isinstance(expr, (UnaryMinus, Not, IsNull)):
        yield from walk(expr.operand)
    elif isinstance(expr, (Arithmetic, Comparison, Logical)):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, InList):
        yield from walk(expr.operand)
        for item in expr.items:
            yield from walk(item)
    elif isinstance(expr, AggCall) and expr.arg is not None:
        yield from walk(expr.arg)


def contains_aggregate(expr: Expr) -> bool:
    return any(isinstance(node, AggCall) for node in walk(expr))


def table_refs(items: Tuple[FromItem, ...]) -> Tuple[TableRef, ...]:
    """Flatten FROM items into table references in left-to-right order."""
    refs = []

    def visit(item: FromItem) -> None:
        if isinstance(item, Join):
            visit(item.left)
            refs.append(item.right)
        else:
            refs.append(item)

    for item in items:
        visit(item)
    return tuple(refs)
