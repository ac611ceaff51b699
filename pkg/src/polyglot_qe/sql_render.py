"""
Deterministic SQL rendering of syntax trees.

parse(render(tree)) == tree for every tree the parser can produce; parentheses
are emitted only where operator precedence requires them.
"""

import re

from .relmodel import ScalarType, render_value
from .sql_ast import (
    AddColumn,
    AggCall,
    AlterColumnOptions,
    AlterColumnType,
    AlterForeignTable,
    AlterTableOptions,
    Arithmetic,
    ColumnRef,
    ColumnSpec,
    Comparison,
    CreateForeignTable,
    CreateMaterializedView,
    CreateServer,
    DropColumn,
    DropForeignTable,
    DropMaterializedView,
    Explain,
    Expr,
    FromItem,
    ImportForeignSchema,
    InList,
    IsNull,
    Join,
    Literal,
    Logical,
    Not,
    OptionChange,
    Options,
    QualifiedName,
    Query,
    RefreshMaterializedView,
    Select,
    Star,
    Statement,
    UnaryMinus,
)

RESERVED_WORDS = frozenset(
    """
    ALL ALTER AND AS ASC BY CASE CREATE CROSS DESC DISTINCT DROP ELSE END EXPLAIN
    FALSE FROM FULL GROUP HAVING IMPORT IN INNER INTO IS JOIN LEFT LIMIT NOT NULL
    OFFSET ON OR ORDER OUTER REFRESH RIGHT SELECT THEN TRUE UNION WHEN WHERE WITH
    """.split()
)

TYPE_NAMES = {
    ScalarType.BOOL: "BOOLEAN",
    ScalarType.SMALLINT: "SMALLINT",
    ScalarType.INT: "INTEGER",
    ScalarType.BIGINT: "BIGINT",
    ScalarType.DOUBLE: "DOUBLE PRECISION",
    ScalarType.NUMERIC: "NUMERIC",
    ScalarType.TEXT: "TEXT",
    ScalarType.TIMESTAMP: "TIMESTAMP",
}

_BARE_IDENT = re.compile(r"^[a-z_][a-z0-9_]*$")

PREC_OR = 1
PREC_AND = 2
PREC_NOT = 3
PREC_COMPARE = 4
PREC_ADD = 5
PREC_MUL = 6
PREC_UNARY = 7
PREC_ATOM = 8


def quote_ident(name: str) -> str:
    if _BARE_IDENT.match(name) and name.upper() not in RESERVED_WORDS:
        return name
    return '"' + name.replace('"', '""') + '"'


def quote_string(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


def render_name(name: QualifiedName) -> str:
    if name.schema:
        return f"{quote_ident(name.schema)}.{quote_ident(name.name)}"
    return quote_ident(name.name)


def precedence(expr: Expr) -> int:
    if isinstance(expr, Logical):
        return PREC_OR if expr.op == "OR" else PREC_AND
    if isinstance(expr, Not):
        return PREC_NOT
    if isinstance(expr, (Comparison, InList, IsNull)):
        return PREC_COMPARE
    if isinstance(expr, Arithmetic):
        return PREC_ADD if expr.op in ("+", "-") else PREC_MUL
    if isinstance(expr, UnaryMinus):
        return PREC_UNARY
    return PREC_ATOM


def _wrap(expr: Expr, needs_parens: bool) -> str:
    text = render_expr(expr)
    return f"({text})" if needs_parens else text


def render_expr(expr: Expr) -> str:
    if isinstance(expr, ColumnRef):
        if expr.table:
            return f"{quote_ident(expr.table)}.{quote_ident(expr.name)}"
        return quote_ident(expr.name)
    if isinstance(expr, Literal):
        return render_value(expr.value)
    if isinstance(expr, Star):
        return f"{quote_ident(expr.table)}.*" if expr.table else "*"
    if isinstance(expr, UnaryMinus):
        return f"-({render_expr(expr.operand)})"
    if isinstance(expr, (Arithmetic, Logical)):
        prec = precedence(expr)
        left = _wrap(expr.left, precedence(expr.left) < prec)
        right = _wrap(expr.right, precedence(expr.right) <= prec)
        return f"{left} {expr.op} {right}"
    if isinstance(expr, Comparison):
        left = _wrap(expr.left, precedence(expr.left) <= PREC_COMPARE)
        right = _wrap(expr.right, precedence(expr.right) <= PREC_COMPARE)
        return f"{left} {expr.op} {right}"
    if isinstance(expr, InList):
        operand = _wrap(expr.operand, precedence(expr.operand) <= PREC_COMPARE)
        items = ", ".join(render_expr(item) for item in expr.items)
        keyword = "NOT IN" if expr.negated else "IN"
        return f"{operand} {keyword} ({items})"
    if isinstance(expr, IsNull):
        operand = _wrap(expr.operand, precedence(expr.operand) <= PREC_COMPARE)
        return f"{operand} IS NOT NULL" if expr.negated else f"{operand} IS NULL"
    if isinstance(expr, Not):
        return "NOT " + _wrap(expr.operand, precedence(expr.operand) < PREC_NOT)
    if isinstance(expr, AggCall):
        if expr.arg is None:
            return f"{expr.func}(*)"
        prefix = "DISTINCT " if expr.distinct else ""
        return f"{expr.func}({prefix}{render_expr(expr.arg)})"
    raise TypeError(f"cannot render expression {expr!r}")


def render_from_item(item: FromItem) -> str:
    if isinstance(item, Join):
        return (
            f"{render_from_item(item.left)} JOIN {render_from_item(item.right)}"
            f" ON {render_expr(item.condition)}"
        )
    text = render_name(item.name)
    if item.alias:
        text += f" AS {quote_ident(item.alias)}"
    return text


def render_query(query: Query) -> str:
    items = []
    for item in query.select_items:
        text = render_expr(item.expr)
        if item.alias:
            text += f" AS {quote_ident(item.alias)}"
        items.append(text)
    parts = ["SELECT " + ("DISTINCT " if query.distinct else "") + ", ".join(items)]
    if query.from_items:
        parts.append("FROM " + ", ".join(render_from_item(i) for i in query.from_items))
    if query.where is not None:
        parts.append("WHERE " + render_expr(query.where))
    if query.group_by:
        parts.append("GROUP BY " + ", ".join(render_expr(e) for e in query.group_by))
    if query.having is not None:
        parts.append("HAVING " + render_expr(query.having))
    if query.order_by:
        keys = [
            render_expr(o.expr) + (" DESC" if o.descending else "") for o in query.order_by
        ]
        parts.append("ORDER BY " + ", ".join(keys))
    if query.limit is not None:
        parts.append(f"LIMIT {query.limit}")
    return " ".join(parts)


def render_options(options: Options) -> str:
    body = ", ".join(f"{quote_ident(k)} {quote_string(v)}" for k, v in options)
    return f"OPTIONS ({body})"


def render_changes(changes) -> str:
    rendered = []
    for change in changes:
        rendered.append(_render_change(change))
    return "OPTIONS (" + ", ".join(rendered) + ")"


def _render_change(change: OptionChange) -> str:
    name = quote_ident(change.name)
    if change.action == "DROP":
        return f"DROP {name}"
    value = quote_string(change.value or "")
    if change.action == "SET":
        return f"SET {name} {value}"
    return f"{name} {value}"


def render_column_spec(spec: ColumnSpec) -> str:
    text = f"{quote_ident(spec.name)} {TYPE_NAMES[spec.type]}"
    if spec.options:
        text += " " + render_options(spec.options)
    return text


def _render_action(action) -> str:
    if isinstance(action, AlterColumnOptions):
        return f"ALTER COLUMN {quote_ident(action.column)} {render_changes(action.changes)}"
    if isinstance(action, AlterColumnType):
        return f"ALTER COLUMN {quote_ident(action.column)} TYPE {TYPE_NAMES[action.type]}"
    if isinstance(action, AddColumn):
        return f"ADD COLUMN {render_column_spec(action.column)}"
    if isinstance(action, DropColumn):
        return f"DROP COLUMN {quote_ident(action.column)}"
    if isinstance(action, AlterTableOptions):
        return render_changes(action.changes)
    raise TypeError(f"cannot render alter action {action!r}")


def render(statement: Statement, pretty: bool = False) -> str:
    """Render a statement; pretty=True lays DDL column lists out one per line."""
    if isinstance(statement, Select):
        return render_query(statement.query)
    if isinstance(statement, Explain):
        return "EXPLAIN " + render_query(statement.query)
    if isinstance(statement, CreateForeignTable):
        separator = ",\n  " if pretty else ", "
        opening = "(\n  " if pretty else "("
        closing = "\n)" if pretty else ")"
        columns = separator.join(render_column_spec(c) for c in statement.columns)
        text = (
            f"CREATE FOREIGN TABLE {render_name(statement.name)} {opening}{columns}{closing}"
            f" SERVER {quote_ident(statement.server)}"
        )
        if statement.options:
            text += " " + render_options(statement.options)
        return text
    if isinstance(statement, AlterForeignTable):
        separator = ",\n  " if pretty else ", "
        actions = separator.join(_render_action(a) for a in statement.actions)
        lead = "\n  " if pretty else " "
        return f"ALTER FOREIGN TABLE {render_name(statement.name)}{lead}{actions}"
    if isinstance(statement, DropForeignTable):
        guard = "IF EXISTS " if statement.if_exists else ""
        return f"DROP FOREIGN TABLE {guard}{render_name(statement.name)}"
    if isinstance(statement, CreateServer):
        text = f"CREATE SERVER {quote_ident(statement.name)} FOREIGN DATA WRAPPER {quote_ident(statement.kind)}"
        if statement.options:
            text += " " + render_options(statement.options)
        return text
    if isinstance(statement, ImportForeignSchema):
        text = (
            f"IMPORT FOREIGN SCHEMA {quote_ident(statement.remote_schema)}"
            f" FROM SERVER {quote_ident(statement.server)}"
            f" INTO {quote_ident(statement.local_schema)}"
        )
        if statement.options:
            text += " " + render_options(statement.options)
        return text
    if isinstance(statement, CreateMaterializedView):
        text = f"CREATE MATERIALIZED VIEW {render_name(statement.name)} AS {render_query(statement.query)}"
        if statement.refresh_interval is not None:
            text += f" REFRESH EVERY {statement.refresh_interval} SECONDS"
        return text
    if isinstance(statement, RefreshMaterializedView):
        return f"REFRESH MATERIALIZED VIEW {render_name(statement.name)}"
    if isinstance(statement, DropMaterializedView):
        guard = "IF EXISTS " if statement.if_exists else ""
        return f"DROP MATERIALIZED VIEW {guard}{render_name(statement.name)}"
    raise TypeError(f"cannot render statement {statement!r}")
