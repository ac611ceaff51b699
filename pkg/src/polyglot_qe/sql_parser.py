"""
Recursive-descent parser for the SQL dialect.

Keywords are case-insensitive; unquoted identifiers fold to lower case and
double-quoted identifiers keep their case. See docs/grammar.ebnf.
"""

import logging
from typing import Callable, List, Optional, Tuple

from .errors import ReservedWordError, SqlSyntaxError
from .relmodel import ScalarType, Timestamp
from .sql_ast import (
    AGGREGATE_FUNCS,
    COMPARISON_OPS,
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
    OrderItem,
    QualifiedName,
    Query,
    RefreshMaterializedView,
    Select,
    SelectItem,
    Star,
    Statement,
    TableRef,
    UnaryMinus,
)
from .sql_lexer import EOF, IDENT, NUMBER, STRING, WORD, Token, tokenize
from .sql_render import RESERVED_WORDS

logger = logging.getLogger(__name__)

_INTEGER_TYPES = {
    "SMALLINT": ScalarType.SMALLINT,
    "INT2": ScalarType.SMALLINT,
    "INTEGER": ScalarType.INT,
    "INT": ScalarType.INT,
    "INT4": ScalarType.INT,
    "BIGINT": ScalarType.BIGINT,
    "INT8": ScalarType.BIGINT,
}


class Parser:
    """Parses exactly one statement from a token list."""

    def __init__(self, sql: str):
        self.sql = sql
        self.tokens: List[Token] = tokenize(sql)
        self.index = 0

    # token helpers

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def peek(self, offset: int = 1) -> Token:
        index = min(self.index + offset, len(self.tokens) - 1)
        return self.tokens[index]

    def advance(self) -> Token:
        token = self.current
        if token.kind != EOF:
            self.index += 1
        return token

    def error(self, message: str, token: Optional[Token] = None) -> SqlSyntaxError:
        token = token or self.current
        shown = token.text if token.kind != EOF else "end of input"
        return SqlSyntaxError(message, token.line, token.column, shown)

    def accept_word(self, *words: str) -> Optional[Token]:
        if self.current.is_word(*words):
            return self.advance()
        return None

    def expect_word(self, *words: str) -> Token:
        token = self.accept_word(*words)
        if token is None:
            raise self.error(f"expected {' or '.join(words)}")
        return token

    def accept_punct(self, *symbols: str) -> Optional[Token]:
        if self.current.is_punct(*symbols):
            return self.advance()
        return None

    def expect_punct(self, symbol: str) -> Token:
        token = self.accept_punct(symbol)
        if token is None:
            raise self.error(f"expected {symbol!r}")
        return token

    def at_identifier(self) -> bool:
        token = self.current
        return token.kind == IDENT or (token.kind == WORD and token.upper not in RESERVED_WORDS)

    def identifier(self, what: str = "identifier") -> str:
        token = self.current
        if token.kind == IDENT:
            self.advance()
            return token.text
        if token.kind == WORD:
            if token.upper in RESERVED_WORDS:
                raise ReservedWordError(
                    f"reserved word {token.text!r} cannot be used as {what}; quote it",
                    token.line,
                    token.column,
                    token.text,
                )
            self.advance()
            return token.text.lower()
        raise self.error(f"expected {what}")

    def qualified_name(self) -> QualifiedName:
        first = self.identifier("a name")
        if self.accept_punct("."):
            return QualifiedName(self.identifier("a name"), first)
        return QualifiedName(first)

    def string(self, what: str = "string literal") -> str:
        token = self.current
        if token.kind != STRING:
            raise self.error(f"expected {what}")
        self.advance()
        return token.text

    def integer(self, what: str = "integer") -> int:
        token = self.current
        if token.kind != NUMBER or not token.text.isdigit():
            raise self.error(f"expected {what}")
        self.advance()
        return int(token.text)

    def comma_list(self, item: Callable):
        values = [item()]
        while self.accept_punct(","):
            values.append(item())
        return tuple(values)

    # entry point

    def parse_statement(self) -> Statement:
        token = self.current
        if token.is_word("SELECT"):
            statement: Statement = Select(self.query())
        elif token.is_word("EXPLAIN"):
            self.advance()
            statement = Explain(self.query())
        elif token.is_word("CREATE"):
            statement = self.create()
        elif token.is_word("ALTER"):
            statement = self.alter_table()
        elif token.is_word("DROP"):
            statement = self.drop()
        elif token.is_word("IMPORT"):
            statement = self.import_schema()
        elif token.is_word("REFRESH"):
            self.advance()
            self.expect_word("MATERIALIZED")
            self.expect_word("VIEW")
            statement = RefreshMaterializedView(self.qualified_name())
        else:
            raise self.error("expected a statement")
        self.accept_punct(";")
        if self.current.kind != EOF:
            raise self.error("unexpected input after statement")
        return statement

    # queries

    def query(self) -> Query:
        self.expect_word("SELECT")
        distinct = self.accept_word("DISTINCT") is not None
        select_items = self.comma_list(self.select_item)
        from_items: Tuple[FromItem, ...] = ()
        where = having = None
        group_by: Tuple[Expr, ...] = ()
        order_by: Tuple[OrderItem, ...] = ()
        limit = None

        if self.accept_word("FROM"):
            from_items = self.comma_list(self.from_item)
        if self.accept_word("WHERE"):
            where = self.expr()
        if self.current.is_word("GROUP"):
            self.advance()
            self.expect_word("BY")
            group_by = self.comma_list(self.expr)
        if self.current.is_word("HAVING"):
            if not group_by:
                raise self.error("HAVING requires GROUP BY")
            self.advance()
            having = self.expr()
        if self.current.is_word("ORDER"):
            self.advance()
            self.expect_word("BY")
            order_by = self.comma_list(self.order_item)
        if self.accept_word("LIMIT"):
            limit = self.integer("non-negative LIMIT count")
        return Query(
            select_items=select_items,
            distinct=distinct,
            from_items=from_items,
            where=where,
            group_by=group_by,
            having=having,
            order_by=order_by,
            limit=limit,
        )

    def select_item(self) -> SelectItem:
        if self.accept_punct("*"):
            return SelectItem(Star())
        if (
            (self.current.kind == IDENT or self.current.kind == WORD)
            and self.peek().is_punct(".")
            and self.peek(2).is_punct("*")
        ):
            table = self.identifier("a table name")
            self.advance()
            self.advance()
            return SelectItem(Star(table))
        expr = self.expr()
        return SelectItem(expr, self.alias())

    def alias(self) -> Optional[str]:
        if self.accept_word("AS"):
            return self.identifier("an alias")
        if self.at_identifier():
            return self.identifier("an alias")
        return None

    def table_ref(self) -> TableRef:
        name = self.qualified_name()
        return TableRef(name, self.alias())

    def from_item(self) -> FromItem:
        item: FromItem = self.table_ref()
        while True:
            if self.current.is_word("CROSS"):
                self.advance()
                self.expect_word("JOIN")
                item = Join(item, self.table_ref(), Literal(True))
            elif self.current.is_word("JOIN", "INNER"):
                if self.accept_word("INNER"):
                    pass
                self.expect_word("JOIN")
                right = self.table_ref()
                self.expect_word("ON")
                item = Join(item, right, self.expr())
            elif self.current.is_word("LEFT", "RIGHT", "FULL", "OUTER"):
                raise self.error("only inner joins are supported")
            else:
                return item

    def order_item(self) -> OrderItem:
        expr = self.expr()
        if self.accept_word("DESC"):
            return OrderItem(expr, True)
        self.accept_word("ASC")
        return OrderItem(expr, False)

    # expressions

    def expr(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.accept_word("OR"):
            left = Logical("OR", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.accept_word("AND"):
            left = Logical("AND", left, self.not_expr())
        return left

    def not_expr(self) -> Expr:
        if self.accept_word("NOT"):
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        token = self.current
        if token.is_punct(*COMPARISON_OPS):
            self.advance()
            return Comparison(token.text, left, self.additive())
        if token.is_word("IS"):
            self.advance()
            negated = self.accept_word("NOT") is not None
            self.expect_word("NULL")
            return IsNull(left, negated)
        if token.is_word("NOT") and self.peek().is_word("IN"):
            self.advance()
            self.advance()
            return InList(left, self.in_items(), True)
        if token.is_word("IN"):
            self.advance()
            return InList(left, self.in_items(), False)
        return left

    def in_items(self) -> Tuple[Expr, ...]:
        self.expect_punct("(")
        items = self.comma_list(self.expr)
        self.expect_punct(")")
        return items

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.current.is_punct("+", "-"):
            op = self.advance().text
            left = Arithmetic(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.current.is_punct("*", "/"):
            op = self.advance().text
            left = Arithmetic(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.current.is_punct("-"):
            self.advance()
            if self.current.kind == NUMBER:
                literal = self.number()
                return Literal(-literal.value)
            return UnaryMinus(self.unary())
        return self.primary()

    def number(self) -> Literal:
        token = self.advance()
        text = token.text
        if any(c in text for c in ".eE"):
            return Literal(float(text))
        return Literal(int(text))

    def primary(self) -> Expr:
        token = self.current
        if token.kind == NUMBER:
            return self.number()
        if token.kind == STRING:
            self.advance()
            return Literal(token.text)
        if token.is_punct("("):
            self.advance()
            inner = self.expr()
            self.expect_punct(")")
            return inner
        if token.is_word("NULL"):
            self.advance()
            return Literal(None)
        if token.is_word("TRUE", "FALSE"):
            self.advance()
            return Literal(token.upper == "TRUE")
        if token.is_word("TIMESTAMP") and self.peek().kind == STRING:
            self.advance()
            text_token = self.advance()
            try:
                return Literal(Timestamp.parse(text_token.text))
            except ValueError as exc:
                raise self.error(str(exc), text_token) from exc
        if token.kind == WORD and self.peek().is_punct("("):
            return self.function_call()
        if token.kind in (WORD, IDENT):
            first = self.identifier("a column name")
            if self.accept_punct("."):
                return ColumnRef(self.identifier("a column name"), first)
            return ColumnRef(first)
        raise self.error("expected an expression")

    def function_call(self) -> Expr:
        token = self.advance()
        func = token.upper
        if func not in AGGREGATE_FUNCS:
            raise self.error(f"unknown function {token.text!r}", token)
        self.expect_punct("(")
        if func == "COUNT" and self.accept_punct("*"):
            self.expect_punct(")")
            return AggCall("COUNT")
        distinct = False
        if self.current.is_word("DISTINCT"):
            if func != "COUNT":
                raise self.error("DISTINCT is only supported inside COUNT")
            self.advance()
            distinct = True
        arg = self.expr()
        self.expect_punct(")")
        return AggCall(func, arg, distinct)

    # DDL

    def scalar_type(self) -> ScalarType:
        token = self.current
        if token.kind != WORD:
            raise self.error("expected a type name")
        name = token.upper
        self.advance()
        if name in ("BOOLEAN", "BOOL"):
            return ScalarType.BOOL
        if name in _INTEGER_TYPES:
            return _INTEGER_TYPES[name]
        if name == "DOUBLE":
            self.accept_word("PRECISION")
            return ScalarType.DOUBLE
        if name in ("FLOAT8", "FLOAT", "REAL"):
            return ScalarType.DOUBLE
        if name in ("NUMERIC", "DECIMAL"):
            self._type_modifiers(2)
            return ScalarType.NUMERIC
        if name in ("TEXT", "VARCHAR"):
            self._type_modifiers(1)
            return ScalarType.TEXT
        if name == "CHARACTER":
            self.expect_word("VARYING")
            self._type_modifiers(1)
            return ScalarType.TEXT
        if name == "TIMESTAMP":
            if self.current.is_word("WITH"):
                raise self.error("time zones other than UTC are not supported")
            if self.accept_word("WITHOUT"):
                self.expect_word("TIME")
                self.expect_word("ZONE")
            return ScalarType.TIMESTAMP
        raise self.error(f"unknown type {token.text!r}", token)

    def _type_modifiers(self, limit: int) -> None:
        if not self.accept_punct("("):
            return
        count = 1
        self.integer("type modifier")
        while self.accept_punct(","):
            count += 1
            self.integer("type modifier")
        if count > limit:
            raise self.error("too many type modifiers")
        self.expect_punct(")")

    def options(self) -> Options:
        self.expect_word("OPTIONS")
        self.expect_punct("(")
        pairs = self.comma_list(self._option_pair)
        self.expect_punct(")")
        return pairs

    def _option_pair(self) -> Tuple[str, str]:
        name = self.identifier("an option name")
        return name, self.string("option value")

    def option_changes(self) -> Tuple[OptionChange, ...]:
        self.expect_word("OPTIONS")
        self.expect_punct("(")
        changes = self.comma_list(self._option_change)
        self.expect_punct(")")
        return changes

    def _option_change(self) -> OptionChange:
        token = self.current
        action = "ADD"
        if token.is_word("ADD", "SET", "DROP") and self.peek().kind in (WORD, IDENT):
            action = self.advance().upper
        name = self.identifier("an option name")
        if action == "DROP":
            return OptionChange("DROP", name)
        return OptionChange(action, name, self.string("option value"))

    def column_spec(self) -> ColumnSpec:
        name = self.identifier("a column name")
        scalar_type = self.scalar_type()
        options: Options = ()
        if self.current.is_word("OPTIONS"):
            options = self.options()
        return ColumnSpec(name, scalar_type, options)

    def create(self) -> Statement:
        self.expect_word("CREATE")
        if self.accept_word("FOREIGN"):
            self.expect_word("TABLE")
            name = self.qualified_name()
            self.expect_punct("(")
            columns = self.comma_list(self.column_spec)
            self.expect_punct(")")
            self.expect_word("SERVER")
            server = self.identifier("a server name")
            options: Options = ()
            if self.current.is_word("OPTIONS"):
                options = self.options()
            return CreateForeignTable(name, columns, server, options)
        if self.accept_word("SERVER"):
            name_text = self.identifier("a server name")
            self.expect_word("FOREIGN")
            self.expect_word("DATA")
            self.expect_word("WRAPPER")
            kind = self.identifier("a wrapper kind")
            options = ()
            if self.current.is_word("OPTIONS"):
                options = self.options()
            return CreateServer(name_text, kind, options)
        if self.accept_word("MATERIALIZED"):
            self.expect_word("VIEW")
            view_name = self.qualified_name()
            self.expect_word("AS")
            query = self.query()
            interval = None
            if self.accept_word("REFRESH"):
                self.expect_word("EVERY")
                interval = self.integer("refresh interval in seconds")
                if interval < 1:
                    raise self.error("refresh interval must be at least 1 second")
                self.expect_word("SECONDS", "SECOND")
            return CreateMaterializedView(view_name, query, interval)
        raise self.error("expected FOREIGN TABLE, SERVER or MATERIALIZED VIEW")

    def alter_table(self) -> AlterForeignTable:
        self.expect_word("ALTER")
        self.expect_word("FOREIGN")
        self.expect_word("TABLE")
        name = self.qualified_name()
        actions = self.comma_list(self._alter_action)
        return AlterForeignTable(name, actions)

    def _alter_action(self):
        if self.accept_word("ALTER"):
            self.accept_word("COLUMN")
            column = self.identifier("a column name")
            if self.current.is_word("OPTIONS"):
                return AlterColumnOptions(column, self.option_changes())
            if self.accept_word("SET"):
                self.expect_word("DATA")
            self.expect_word("TYPE")
            return AlterColumnType(column, self.scalar_type())
        if self.accept_word("ADD"):
            self.accept_word("COLUMN")
            return AddColumn(self.column_spec())
        if self.current.is_word("DROP"):
            self.advance()
            self.accept_word("COLUMN")
            return DropColumn(self.identifier("a column name"))
        if self.current.is_word("OPTIONS"):
            return AlterTableOptions(self.option_changes())
        raise self.error("expected ALTER COLUMN, ADD COLUMN, DROP COLUMN or OPTIONS")

    def drop(self) -> Statement:
        self.expect_word("DROP")
        if self.accept_word("FOREIGN"):
            self.expect_word("TABLE")
            if_exists = self._if_exists()
            return DropForeignTable(self.qualified_name(), if_exists)
        if self.accept_word("MATERIALIZED"):
            self.expect_word("VIEW")
            if_exists = self._if_exists()
            return DropMaterializedView(self.qualified_name(), if_exists)
        raise self.error("expected FOREIGN TABLE or MATERIALIZED VIEW")

    def _if_exists(self) -> bool:
        if self.current.is_word("IF") and self.peek().is_word("EXISTS"):
            self.advance()
            self.advance()
            return True
        return False

    def import_schema(self) -> ImportForeignSchema:
        self.expect_word("IMPORT")
        self.expect_word("FOREIGN")
        self.expect_word("SCHEMA")
        remote = self.identifier("a remote schema name")
        self.expect_word("FROM")
        self.expect_word("SERVER")
        server = self.identifier("a server name")
        self.expect_word("INTO")
        local = self.identifier("a local schema name")
        options: Options = ()
        if self.current.is_word("OPTIONS"):
            options = self.options()
        return ImportForeignSchema(remote, server, local, options)


def parse(sql: str) -> Statement:
    """Parse a single statement; a trailing semicolon is allowed."""
    statement = Parser(sql).parse_statement()
    logger.debug(f"Parsed {type(statement).__name__}")
    return statement


def parse_query(sql: str) -> Query:
    statement = parse(sql)
    if not isinstance(statement, Select):
        raise SqlSyntaxError("expected a SELECT query", 1, 1)
    return statement.query


def parse_expression(sql: str) -> Expr:
    parser = Parser(sql)
    expr = parser.expr()
    if parser.current.kind != EOF:
        raise parser.error("unexpected input after expression")
    return expr
