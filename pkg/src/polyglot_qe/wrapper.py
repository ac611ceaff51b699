"""
Wrapper contract shared by every store adapter.

A wrapper answers three questions for the planner: what it can evaluate
natively (capabilities), how it would run a given scan (plan_scan), and how to
stream the rows (open). It also extracts table metadata for schema import.
"""

import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

from .catalog import ForeignTableDef, ServerDef, StoreKind
from .errors import CoercionError, CursorError, PolyglotError, StoreError
from .relmodel import ColumnDef, Row, ScalarType, Timestamp, Value, coerce, render_value
from .sql_ast import CreateForeignTable

logger = logging.getLogger(__name__)

PREDICATE_OPS = ("=", "<>", "<", "<=", ">", ">=", "IN")
RANGE_OPS = ("<", "<=", ">", ">=")

SELECTIVITY = {"=": 0.1, "IN": 0.2, "<": 0.3, "<=": 0.3, ">": 0.3, ">=": 0.3, "<>": 0.9}
DEFAULT_CARDINALITY = 1000.0

# stand-in literals used to ask a wrapper whether a parameterised filter would be accepted
PLACEHOLDERS: Dict[ScalarType, Value] = {
    ScalarType.BOOL: False,
    ScalarType.SMALLINT: 0,
    ScalarType.INT: 0,
    ScalarType.BIGINT: 0,
    ScalarType.DOUBLE: 0.0,
    ScalarType.NUMERIC: 0.0,
    ScalarType.TEXT: "",
    ScalarType.TIMESTAMP: Timestamp(0),
}


@dataclass(frozen=True)
class WrapperCapabilities:
    filter_eq_on_key: bool = False
    filter_general: bool = False
    projection: bool = False
    sort: bool = False
    group_aggregate: bool = False
    limit: bool = False
    native_fragment: bool = False

    def __post_init__(self) -> None:
        if self.group_aggregate and not self.filter_general:
            raise ValueError("group_aggregate requires filter_general")

    @classmethod
    def disabled(cls) -> "WrapperCapabilities":
        return cls()

    @classmethod
    def full(cls) -> "WrapperCapabilities":
        return cls(**{f.name: True for f in fields(cls)})


@dataclass(frozen=True)
class Predicate:
    """A single-column conjunct: column op literal (value is a tuple for IN)."""

    column: str
    op: str
    value: Any

    def __post_init__(self) -> None:
        if self.op not in PREDICATE_OPS:
            raise ValueError(f"unsupported predicate operator {self.op!r}")

    def render(self) -> str:
        if self.op == "IN":
            return f"{self.column} IN ({', '.join(render_value(v) for v in self.value)})"
        return f"{self.column} {self.op} {render_value(self.value)}"


@dataclass(frozen=True)
class SortKey:
    column: str
    descending: bool = False


@dataclass(frozen=True)
class AggregateSpec:
    func: str
    column: Optional[str] = None
    distinct: bool = False

    def render(self) -> str:
        inner = "*" if self.column is None else ("DISTINCT " if self.distinct else "") + self.column
        return f"{self.func}({inner})"


@dataclass(frozen=True)
class AggregateRequest:
    group_by: Tuple[str, ...]
    aggregates: Tuple[AggregateSpec, ...]


@dataclass(frozen=True)
class ScanRequest:
    table: ForeignTableDef
    required_columns: Tuple[str, ...]
    filters: Tuple[Predicate, ...] = ()
    sort: Tuple[SortKey, ...] = ()
    limit: Optional[int] = None
    aggregate: Optional[AggregateRequest] = None

    def __post_init__(self) -> None:
        for name in self.required_columns:
            if self.table.schema.column(name) is None:
                raise ValueError(f"unknown column {name!r} in scan of {self.table.qualified}")
        for predicate in self.filters:
            if self.table.schema.column(predicate.column) is None:
                raise ValueError(f"predicate on unknown column {predicate.column!r}")

    def columns(self) -> Tuple[ColumnDef, ...]:
        return tuple(self.table.schema.column(name) for name in self.required_columns)


@dataclass(frozen=True)
class ScanPlan:
    request: ScanRequest
    accepted: Tuple[Predicate, ...]
    residual: Tuple[Predicate, ...]
    native_text: str
    est_rows: float
    output_columns: Tuple[ColumnDef, ...]
    sort_accepted: bool = False
    limit_accepted: bool = False
    aggregate_accepted: bool = False
    raw_documents: bool = False
    native: Any = field(default=None, compare=False)


class WrapperStats:
    """Per-query counters; safe to share between the cursors of one query."""

    COUNTERS = ("point_gets", "scans", "rows_emitted")

    def __init__(self):
        self._lock = threading.Lock()
        self.point_gets = 0
        self.scans = 0
        self.rows_emitted = 0

    def add(self, counter: str, amount: int = 1) -> None:
        with self._lock:
            setattr(self, counter, getattr(self, counter) + amount)

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            return {name: getattr(self, name) for name in self.COUNTERS}

    def __repr__(self) -> str:
        counters = ", ".join(f"{k}={v}" for k, v in self.snapshot().items())
        return f"WrapperStats({counters})"


class Cursor(ABC):
    @abstractmethod
    def next(self) -> Optional[Row]:
        """Next row, or None at end (repeatedly)."""

    def close(self) -> None:
        pass

    def __iter__(self) -> Iterator[Row]:
        while True:
            row = self.next()
            if row is None:
                return
            yield row


class IteratorCursor(Cursor):
    """Cursor over a row generator; counts emitted rows and tags failures with store context."""

    def __init__(self, rows: Iterator[Row], stats: WrapperStats, context: Dict[str, Any]):
        self._rows = rows
        self._stats = stats
        self._context = context
        self._done = False

    def next(self) -> Optional[Row]:
        if self._done:
            return None
        try:
            row = next(self._rows)
        except StopIteration:
            self._done = True
            return None
        except CursorError:
            self._done = True
            raise
        except PolyglotError as exc:
            self._done = True
            raise CursorError(str(exc), {**self._context, **exc.context}) from exc
        self._stats.add("rows_emitted")
        return row

    def close(self) -> None:
        if not self._done:
            self._done = True
            close = getattr(self._rows, "close", None)
            if close is not None:
                close()


@dataclass(frozen=True)
class ImportFailure:
    source: str
    message: str


@dataclass
class ImportResult:
    statements: List[CreateForeignTable] = field(default_factory=list)
    failures: List[ImportFailure] = field(default_factory=list)


def estimate_rows(base: float, accepted: Tuple[Predicate, ...], limit: Optional[int] = None) -> float:
    estimate = base
    for predicate in accepted:
        estimate *= SELECTIVITY[predicate.op]
    if limit is not None:
        estimate = min(estimate, float(limit))
    return max(estimate, 1.0)


def convert_cell(value: Value, column: ColumnDef, row_key: Any, context: Dict[str, Any]) -> Value:
    try:
        return coerce(value, column.type, column.name)
    except CoercionError as exc:
        raise CursorError(
            f"cannot convert {column.name!r} for row key {row_key!r}: {exc}",
            {**context, "row_key": row_key, "column": column.name},
        ) from exc


class ForeignDataWrapper(ABC):
    """Base class for store adapters; one instance per server."""

    kind: StoreKind
    native_capabilities: WrapperCapabilities

    def __init__(self, server: ServerDef, pushdown_enabled: bool = True):
        if server.kind is not self.kind:
            raise StoreError(f"server {server.name!r} is a {server.kind.value} server, not {self.kind.value}")
        self.server = server
        self.pushdown_enabled = pushdown_enabled

    def capabilities(self) -> WrapperCapabilities:
        if not self.pushdown_enabled:
            return WrapperCapabilities.disabled()
        return self.native_capabilities

    def with_pushdown(self, enabled: bool) -> "ForeignDataWrapper":
        clone = type(self).__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.pushdown_enabled = enabled
        return clone

    def context(self, table: ForeignTableDef) -> Dict[str, Any]:
        return {"server": self.server.name, "store": self.kind.value, "table": table.qualified}

    def check_table(self, table: ForeignTableDef) -> None:
        if table.server != self.server.name:
            raise StoreError(f"table {table.qualified} belongs to server {table.server!r}, not {self.server.name!r}")

    @abstractmethod
    def plan_scan(self, request: ScanRequest) -> ScanPlan:
        """Split the request into what the store evaluates and what the mediator must."""

    @abstractmethod
    def open(self, plan: ScanPlan, stats: Optional[WrapperStats] = None) -> Cursor:
        """Start streaming the rows of a plan produced by this wrapper."""

    @abstractmethod
    def import_schema(self, local_schema: str, sample_limit: int, options: Optional[Dict[str, str]] = None) -> ImportResult:
        """Foreign table definitions for everything the server holds."""

    def hypothetical_scan(self, request: ScanRequest, parameters: Tuple[str, ...]) -> ScanPlan:
        """Plan request plus placeholder equalities on the parameter columns (used to cost bind joins)."""
        placeholders = tuple(
            Predicate(name, "=", PLACEHOLDERS[request.table.schema.column(name).type]) for name in parameters
        )
        return self.plan_scan(replace(request, filters=request.filters + placeholders))

    @staticmethod
    def accepts_parameters(plan: ScanPlan, count: int) -> bool:
        """True when the last count filters of a hypothetical scan were all accepted."""
        if count == 0 or plan.raw_documents:
            return False
        parameters = plan.request.filters[-count:]
        return all(any(p is a for a in plan.accepted) for p in parameters)


WrapperFactory = Callable[[ServerDef, bool], ForeignDataWrapper]


def parametrise(plan: ScanPlan, bindings: Dict[str, Value]) -> ScanRequest:
    """Request equal to plan's, with an equality filter per bound column added."""
    extra = tuple(Predicate(column, "=", value) for column, value in bindings.items())
    return replace(plan.request, filters=plan.request.filters + extra)
