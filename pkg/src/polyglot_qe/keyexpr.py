"""
Composite row-key expressions.

A spec looks like ``d_id,d_w_id:str(d_id).zfill(5)+str(d_w_id).zfill(5)``: the
columns the key is computed from, a colon, then an expression in a small
snippet language:

    expr  := term ('+' term)*
    term  := text-literal | chain
    chain := (identifier | 'str(' identifier ')') ('.zfill(' posint ')')*

Only text concatenation and zero padding are supported.
"""

import re
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple, Union

from .errors import KeyExprError
from .relmodel import ScalarType, Value, coerce

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<string>'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*")
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<number>\d+)
      | (?P<punct>[+.()])
    )""",
    re.VERBOSE,
)
_COLUMN_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class TextTerm:
    text: str


@dataclass(frozen=True)
class ChainTerm:
    column: str
    stringify: bool = False
    widths: Tuple[int, ...] = ()


Term = Union[TextTerm, ChainTerm]


@dataclass(frozen=True)
class KeyExpr:
    terms: Tuple[Term, ...]

    @property
    def identifiers(self) -> Tuple[str, ...]:
        return tuple(t.column for t in self.terms if isinstance(t, ChainTerm))


@dataclass(frozen=True)
class CompositeKeySpec:
    columns: Tuple[str, ...]
    expr: KeyExpr
    source: str


def _tokenize(text: str) -> List[Tuple[str, str]]:
    tokens = []
    position = 0
    text = text.rstrip()
    while position < len(text):
        match = _TOKEN_RE.match(text, position)
        if not match or match.end() == position:
            raise KeyExprError(f"unexpected character in key expression at offset {position}: {text[position:]!r}")
        kind = match.lastgroup
        tokens.append((kind, match.group(kind)))
        position = match.end()
    return tokens


def _unquote(literal: str) -> str:
    body = literal[1:-1]
    return re.sub(r"\\(.)", r"\1", body)


class _ExprParser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self, offset: int = 0) -> Optional[Tuple[str, str]]:
        index = self.index + offset
        return self.tokens[index] if index < len(self.tokens) else None

    def take(self, kind: str, value: Optional[str] = None) -> str:
        token = self.peek()
        if token is None or token[0] != kind or (value is not None and token[1] != value):
            wanted = value or kind
            found = token[1] if token else "end of expression"
            raise KeyExprError(f"malformed key expression: expected {wanted!r}, found {found!r}")
        self.index += 1
        return token[1]

    def parse(self) -> KeyExpr:
        if not self.tokens:
            raise KeyExprError("empty key expression")
        terms = [self.term()]
        while self.peek() == ("punct", "+"):
            self.index += 1
            terms.append(self.term())
        if self.peek() is not None:
            raise KeyExprError(f"malformed key expression: unexpected {self.peek()[1]!r}")
        return KeyExpr(tuple(terms))

    def term(self) -> Term:
        token = self.peek()
        if token is not None and token[0] == "string":
            self.index += 1
            return TextTerm(_unquote(token[1]))
        return self.chain()

    def chain(self) -> ChainTerm:
        name = self.take("ident")
        stringify = False
        if name == "str" and self.peek() == ("punct", "("):
            self.take("punct", "(")
            name = self.take("ident")
            self.take("punct", ")")
            stringify = True
        widths = []
        while self.peek() == ("punct", "."):
            self.index += 1
            method = self.take("ident")
            if method != "zfill":
                raise KeyExprError(f"unsupported method {method!r}; only zfill is available")
            self.take("punct", "(")
            width = int(self.take("number"))
            if width < 1:
                raise KeyExprError("zfill width must be at least 1")
            self.take("punct", ")")
            widths.append(width)
        return ChainTerm(name, stringify, tuple(widths))


def parse_spec(option_value: str) -> CompositeKeySpec:
    """Parse ``col1,col2:expr`` into a CompositeKeySpec."""
    if ":" not in option_value:
        raise KeyExprError("composite key spec must look like 'col1,col2:expression'")
    column_text, expr_text = option_value.split(":", 1)
    columns = tuple(c.strip() for c in column_text.split(",")) if column_text.strip() else ()
    if not columns:
        raise KeyExprError("composite key spec lists no columns")
    for column in columns:
        if not _COLUMN_RE.match(column):
            raise KeyExprError(f"invalid column name {column!r} in composite key spec")
    expr = _ExprParser(expr_text).parse()
    for name in expr.identifiers:
        if name not in columns:
            raise KeyExprError(f"unknown identifier {name!r} in key expression", {"columns": ",".join(columns)})
    return CompositeKeySpec(columns, expr, option_value)


def _render_piece(term: ChainTerm, value: Value) -> str:
    if term.stringify:
        text = coerce(value, ScalarType.TEXT)
    elif isinstance(value, str):
        text = value
    else:
        raise KeyExprError(f"column {term.column!r} is not text; wrap it in str()")
    for width in term.widths:
        text = text.zfill(width)
    return text


def evaluate(spec: CompositeKeySpec, bindings: Mapping[str, Value]) -> str:
    """Compute the row key from column values."""
    for column in spec.columns:
        if column not in bindings:
            raise KeyExprError(f"missing binding for key column {column!r}")
        if bindings[column] is None:
            raise KeyExprError(f"key column {column!r} is NULL")
    pieces = []
    for term in spec.expr.terms:
        if isinstance(term, TextTerm):
            pieces.append(term.text)
        else:
            pieces.append(_render_piece(term, bindings[term.column]))
    return "".join(pieces)


def key_from_equalities(spec: CompositeKeySpec, eq_filters: Mapping[str, Value]) -> Optional[str]:
    """Key for a direct lookup when every spec column is bound by equality."""
    bound: Dict[str, Value] = {}
    for column in spec.columns:
        if column not in eq_filters or eq_filters[column] is None:
            return None
        bound[column] = eq_filters[column]
    return evaluate(spec, bound)


def render_spec(spec: CompositeKeySpec) -> str:
    return spec.source
