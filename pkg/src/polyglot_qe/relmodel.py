"""
Extended relational data model: values, scalar types, columns, schemas and rows.

Values are plain Python objects so that rows stay cheap to build:

    Null -> None, Bool -> bool, Int64 -> int, Float64 -> float, Text -> str,
    Timestamp -> Timestamp, Array -> list, Document -> dict (insertion ordered)

Values are never mutated after construction; helpers that "change" a document
return a copy.
"""

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from .errors import CoercionError, ValuePathError


class ScalarType(str, Enum):
    BOOL = "BOOL"
    SMALLINT = "SMALLINT"
    INT = "INT"
    BIGINT = "BIGINT"
    DOUBLE = "DOUBLE"
    NUMERIC = "NUMERIC"  # backed by float
    TEXT = "TEXT"
    TIMESTAMP = "TIMESTAMP"

    @property
    def is_integer(self) -> bool:
        return self in (ScalarType.SMALLINT, ScalarType.INT, ScalarType.BIGINT)

    @property
    def is_numeric(self) -> bool:
        return self.is_integer or self in (ScalarType.DOUBLE, ScalarType.NUMERIC)


class StructKind(str, Enum):
    """Non-scalar value kinds reported by type_of()."""

    ARRAY = "ARRAY"
    DOCUMENT = "DOCUMENT"


INTEGER_RANGES: Dict[ScalarType, Tuple[int, int]] = {
    ScalarType.SMALLINT: (-(2**15), 2**15 - 1),
    ScalarType.INT: (-(2**31), 2**31 - 1),
    ScalarType.BIGINT: (-(2**63), 2**63 - 1),
}

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_TIMESTAMP_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2}) (\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?$"
)
_INTEGER_RE = re.compile(r"^\s*[+-]?\d+\s*$")
_DECIMAL_RE = re.compile(r"^\s*[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*$")
_TRUE_TEXT = {"true", "t", "1"}
_FALSE_TEXT = {"false", "f", "0"}


@dataclass(frozen=True, order=True)
class Timestamp:
    """Microseconds since the Unix epoch, UTC."""

    micros: int

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        match = _TIMESTAMP_RE.match(text)
        if not match:
            raise ValueError(f"timestamp must look like YYYY-MM-DD HH:MM:SS[.ffffff]: {text!r}")
        year, month, day, hour, minute, second = (int(g) for g in match.groups()[:6])
        fraction = match.group(7) or ""
        micro = int(fraction.ljust(6, "0")) if fraction else 0
        moment = datetime(year, month, day, hour, minute, second, micro, tzinfo=timezone.utc)
        return cls((moment - _EPOCH) // timedelta(microseconds=1))

    @classmethod
    def from_datetime(cls, moment: datetime) -> "Timestamp":
        if moment.tzinfo is None:
            moment = moment.replace(tzinfo=timezone.utc)
        return cls((moment - _EPOCH) // timedelta(microseconds=1))

    @classmethod
    def now(cls) -> "Timestamp":
        return cls.from_datetime(datetime.now(timezone.utc))

    def to_datetime(self) -> datetime:
        return _EPOCH + timedelta(microseconds=self.micros)

    def plus_seconds(self, seconds: float) -> "Timestamp":
        return Timestamp(self.micros + int(seconds * 1_000_000))

    def render(self) -> str:
        moment = self.to_datetime()
        text = moment.strftime("%Y-%m-%d %H:%M:%S")
        if moment.microsecond:
            text += f".{moment.microsecond:06d}"
        return text

    def __str__(self) -> str:
        return self.render()


Value = Union[None, bool, int, float, str, Timestamp, List[Any], Dict[str, Any]]
Row = Tuple[Value, ...]


@dataclass(frozen=True)
class ColumnDef:
    name: str
    type: ScalarType
    options: Dict[str, str] = field(default_factory=dict)

    @property
    def mname(self) -> str:
        """Source path in the backing store; defaults to the column name."""
        return self.options.get("mname", self.name)

    def with_changes(self, **changes: Any) -> "ColumnDef":
        values = {"name": self.name, "type": self.type, "options": dict(self.options)}
        values.update(changes)
        return ColumnDef(**values)


@dataclass(frozen=True)
class RelSchema:
    columns: Tuple[ColumnDef, ...]

    def __post_init__(self) -> None:
        if not self.columns:
            raise ValueError("a relation needs at least one column")
        seen = set()
        for column in self.columns:
            if column.name in seen:
                raise ValueError(f"duplicate column name {column.name!r}")
            seen.add(column.name)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    def __len__(self) -> int:
        return len(self.columns)

    def index_of(self, name: str) -> Optional[int]:
        for i, column in enumerate(self.columns):
            if column.name == name:
                return i
        return None

    def column(self, name: str) -> Optional[ColumnDef]:
        index = self.index_of(name)
        return None if index is None else self.columns[index]


def split_path(path: str) -> Tuple[str, ...]:
    if not path:
        raise ValuePathError("empty path")
    segments = tuple(path.split("."))
    if any(segment == "" for segment in segments):
        raise ValuePathError(f"malformed path {path!r}: empty segment", {"path": path})
    return segments


def get_path(doc: Value, path: str) -> Value:
    """Value at a dot path; Null when a segment is absent or crosses an array."""
    current: Value = doc
    for segment in split_path(path):
        if not isinstance(current, dict) or segment not in current:
            return None
        current = current[segment]
    return current


def set_path(doc: Dict[str, Any], path: str, value: Value) -> Dict[str, Any]:
    """Copy of doc with path rebound to value; intermediate documents are copied."""
    segments = split_path(path)
    root = dict(doc)
    node = root
    for segment in segments[:-1]:
        child = node.get(segment)
        child = dict(child) if isinstance(child, dict) else {}
        node[segment] = child
        node = child
    node[segments[-1]] = value
    return root


def is_number(value: Value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def type_of(value: Value) -> Union[ScalarType, StructKind, None]:
    if value is None:
        return None
    if isinstance(value, bool):
        return ScalarType.BOOL
    if isinstance(value, int):
        low, high = INTEGER_RANGES[ScalarType.INT]
        return ScalarType.INT if low <= value <= high else ScalarType.BIGINT
    if isinstance(value, float):
        return ScalarType.DOUBLE
    if isinstance(value, str):
        return ScalarType.TEXT
    if isinstance(value, Timestamp):
        return ScalarType.TIMESTAMP
    if isinstance(value, list):
        return StructKind.ARRAY
    if isinstance(value, dict):
        return StructKind.DOCUMENT
    raise TypeError(f"not a value: {value!r}")


def format_float(value: float) -> str:
    """Canonical decimal text for a float; never uses exponent notation."""
    text = repr(value)
    if "e" in text or "E" in text:
        text = format(Decimal(text), "f")
    if "." not in text and text not in ("inf", "-inf", "nan"):
        text += ".0"
    return text


def _check_range(value: int, target: ScalarType, column: Optional[str]) -> int:
    low, high = INTEGER_RANGES[target]
    if not low <= value <= high:
        raise CoercionError(value, target, column, "out of range")
    return value


def coerce(value: Value, target: ScalarType, column: Optional[str] = None) -> Value:
    """Convert value to target, raising CoercionError when it does not fit."""
    if value is None:
        return None

    if target is ScalarType.BOOL:
        if isinstance(value, bool):
            return value
        if isinstance(value, int) and value in (0, 1):
            return bool(value)
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in _TRUE_TEXT:
                return True
            if lowered in _FALSE_TEXT:
                return False
        raise CoercionError(value, target, column)

    if target.is_integer:
        if isinstance(value, bool):
            raise CoercionError(value, target, column)
        if isinstance(value, int):
            return _check_range(value, target, column)
        if isinstance(value, float):
            if value.is_integer():
                return _check_range(int(value), target, column)
            raise CoercionError(value, target, column, "fractional value")
        if isinstance(value, str) and _INTEGER_RE.match(value):
            return _check_range(int(value), target, column)
        raise CoercionError(value, target, column)

    if target in (ScalarType.DOUBLE, ScalarType.NUMERIC):
        if isinstance(value, bool):
            raise CoercionError(value, target, column)
        if isinstance(value, float):
            return value
        if isinstance(value, int):
            return float(value)
        if isinstance(value, str) and _DECIMAL_RE.match(value):
            return float(value)
        raise CoercionError(value, target, column)

    if target is ScalarType.TEXT:
        if isinstance(value, str):
            return value
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, int):
            return str(value)
        if isinstance(value, float):
            return format_float(value)
        if isinstance(value, Timestamp):
            return value.render()
        return json.dumps(to_json(value), ensure_ascii=False, separators=(",", ":"))

    if target is ScalarType.TIMESTAMP:
        if isinstance(value, Timestamp):
            return value
        if isinstance(value, str):
            try:
                return Timestamp.parse(value.strip())
            except ValueError as exc:
                raise CoercionError(value, target, column, str(exc)) from exc
        raise CoercionError(value, target, column)

    raise CoercionError(value, target, column, "unsupported target type")


def compare(a: Value, b: Value) -> Optional[int]:
    """-1, 0 or 1; None when the comparison is unknown (Null or incomparable)."""
    if a is None or b is None:
        return None
    if is_number(a) and is_number(b):
        return (a > b) - (a < b)
    if isinstance(a, bool) and isinstance(b, bool):
        return (a > b) - (a < b)
    if isinstance(a, str) and isinstance(b, str):
        return (a > b) - (a < b)
    if isinstance(a, Timestamp) and isinstance(b, Timestamp):
        return (a.micros > b.micros) - (a.micros < b.micros)
    if isinstance(a, list) and isinstance(b, list):
        for left, right in zip(a, b):
            result = compare(left, right)
            if result != 0:
                return result
        return (len(a) > len(b)) - (len(a) < len(b))
    if isinstance(a, dict) and isinstance(b, dict):
        return 0 if values_equal(a, b) else None
    return None


def values_equal(a: Value, b: Value) -> bool:
    """Structural equality; Int64 and Float64 are never equal to each other."""
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(values_equal(a[k], b[k]) for k in a)
    return type(a) is type(b) and a == b


def sort_key(value: Value) -> Tuple[Any, ...]:
    """Total order over all values: Null first, then bools, numbers, text, ..."""
    if value is None:
        return (0,)
    if isinstance(value, bool):
        return (1, value)
    if is_number(value):
        return (2, value)
    if isinstance(value, str):
        return (3, value)
    if isinstance(value, Timestamp):
        return (4, value.micros)
    if isinstance(value, list):
        return (5, tuple(sort_key(v) for v in value))
    if isinstance(value, dict):
        return (6, tuple((k, sort_key(v)) for k, v in value.items()))
    raise TypeError(f"not a value: {value!r}")


def join_key(value: Value) -> Any:
    """Hashable key under which numerically equal values meet."""
    if value is None:
        return ("null",)
    if isinstance(value, bool):
        return ("b", value)
    if is_number(value):
        return ("n", value)
    if isinstance(value, str):
        return ("s", value)
    if isinstance(value, Timestamp):
        return ("t", value.micros)
    if isinstance(value, list):
        return ("a", tuple(join_key(v) for v in value))
    if isinstance(value, dict):
        return ("d", tuple((k, join_key(v)) for k, v in value.items()))
    raise TypeError(f"not a value: {value!r}")


def row_key(row: Row) -> Tuple[Any, ...]:
    return tuple(join_key(v) for v in row)


def render_value(value: Value) -> str:
    """Canonical text: scalars as SQL literals, arrays as [..], documents as {k: v}."""
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    if isinstance(value, Timestamp):
        return f"TIMESTAMP '{value.render()}'"
    if isinstance(value, list):
        return "[" + ", ".join(render_value(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {render_value(v)}" for k, v in value.items()) + "}"
    raise TypeError(f"not a value: {value!r}")


def to_json(value: Value) -> Any:
    if isinstance(value, Timestamp):
        return {"$date": value.render()}
    if isinstance(value, list):
        return [to_json(v) for v in value]
    if isinstance(value, dict):
        return {k: to_json(v) for k, v in value.items()}
    return value


def from_json(data: Any) -> Value:
    if isinstance(data, dict):
        if len(data) == 1 and "$date" in data and isinstance(data["$date"], str):
            return Timestamp.parse(data["$date"])
        return {k: from_json(v) for k, v in data.items()}
    if isinstance(data, list):
        return [from_json(v) for v in data]
    return data

