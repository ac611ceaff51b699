"""
Token stream for the SQL dialect, built on sqlglot's tokenizer.

sqlglot resolves quoting, escapes, numbers and comments; this module folds its
token types into the handful of kinds the parser cares about and attaches
line/column positions computed from the source offsets.
"""

import re
from dataclasses import dataclass
from typing import List

import sqlglot
from sqlglot.errors import TokenError
from sqlglot.tokens import TokenType

from .errors import SqlSyntaxError

WORD = "word"
IDENT = "ident"
STRING = "string"
NUMBER = "number"
PUNCT = "punct"
EOF = "eof"

PUNCTUATION = {"(", ")", ",", ".", ";", "*", "+", "-", "/", "=", "<>", "!=", "<", "<=", ">", ">="}

_WORDS_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(?:\s+[A-Za-z_][A-Za-z0-9_]*)*$")
_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_FOREIGN_STRINGS = {
    "NATIONAL_STRING",
    "BIT_STRING",
    "HEX_STRING",
    "BYTE_STRING",
    "RAW_STRING",
    "HEREDOC_STRING",
    "UNICODE_STRING",
}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int
    line: int
    column: int

    @property
    def upper(self) -> str:
        return self.text.upper()

    def is_word(self, *words: str) -> bool:
        return self.kind == WORD and (not words or self.upper in words)

    def is_punct(self, *symbols: str) -> bool:
        return self.kind == PUNCT and (not symbols or self.text in symbols)


def position(sql: str, offset: int) -> tuple:
    """1-based (line, column) of a character offset."""
    line = sql.count("\n", 0, offset) + 1
    column = offset - (sql.rfind("\n", 0, offset) + 1) + 1
    return line, column


def _make(kind: str, text: str, sql: str, offset: int) -> Token:
    line, column = position(sql, offset)
    return Token(kind, text, offset, line, column)


def tokenize(sql: str) -> List[Token]:
    try:
        raw_tokens = sqlglot.tokenize(sql)
    except TokenError as exc:
        line, column = position(sql, len(sql))
        raise SqlSyntaxError(f"cannot tokenize input: {exc}", line, column) from exc

    tokens: List[Token] = []
    for raw in raw_tokens:
        kind = raw.token_type
        start = raw.start
        if kind == TokenType.STRING:
            tokens.append(_make(STRING, raw.text, sql, start))
        elif kind == TokenType.IDENTIFIER:
            tokens.append(_make(IDENT, raw.text, sql, start))
        elif kind == TokenType.NUMBER:
            tokens.append(_make(NUMBER, raw.text, sql, start))
        elif kind.name in _FOREIGN_STRINGS:
            line, column = position(sql, start)
            raise SqlSyntaxError("unsupported string literal form", line, column, raw.text)
        elif raw.text in PUNCTUATION:
            text = "<>" if raw.text == "!=" else raw.text
            tokens.append(_make(PUNCT, text, sql, start))
        elif _WORDS_RE.match(raw.text):
            # multi-word keywords ("ORDER BY", "DOUBLE PRECISION") become one word each
            for match in _WORD_RE.finditer(raw.text):
                tokens.append(_make(WORD, match.group(0), sql, start + match.start()))
        else:
            line, column = position(sql, start)
            raise SqlSyntaxError("unexpected token", line, column, raw.text)

    tokens.append(_make(EOF, "", sql, len(sql)))
    return tokens


def split_statements(sql: str) -> List[str]:
    """Split a script into statement texts on top-level semicolons."""
    statements = []
    start = 0
    for token in tokenize(sql):
        if token.is_punct(";") or token.kind == EOF:
            text = sql[start : token.pos].strip()
            if text:
                statements.append(text)
            start = token.pos + 1
    return statements
