"""
Pull-based operators executed at the mediator.

Each operator follows the open() / next() / close() protocol: next() returns
a row tuple or None once exhausted (and keeps returning None), close() may be
called any number of times. Operators also render themselves for EXPLAIN.
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from . import pipeline
from .errors import CoercionError, CursorError, ExecutionError, PolyglotError
from .expressions import BoundExpr, Scope, predicate_holds
from .relmodel import ColumnDef, Row, Value, coerce, get_path, join_key, sort_key
from .sql_ast import AggCall
from .wrapper import ForeignDataWrapper, ScanPlan, WrapperStats, convert_cell, parametrise

logger = logging.getLogger(__name__)


class ExecContext:
    """State shared by the operators of one running query."""

    def __init__(self, stats: Optional[WrapperStats] = None):
        self.stats = stats if stats is not None else WrapperStats()
        self.started = time.monotonic()


class Operator(ABC):
    name = "Operator"

    def __init__(self, scope: Scope, children: Sequence["Operator"] = (), est_rows: float = 1.0):
        self.scope = scope
        self.children: Tuple["Operator", ...] = tuple(children)
        self.est_rows = est_rows
        self._rows: Optional[Iterator[Row]] = None
        self._done = False

    def open(self, ctx: ExecContext) -> None:
        self._rows = self._produce(ctx)
        self._done = False

    def next(self) -> Optional[Row]:
        if self._done or self._rows is None:
            return None
        try:
            return next(self._rows)
        except StopIteration:
            self._done = True
            return None
        except PolyglotError as exc:
            self._done = True
            if "operator" not in exc.context:
                exc.with_context(operator=self.name)
            raise

    def close(self) -> None:
        if self._rows is not None:
            self._rows.close()
            self._rows = None
        self._done = True
        for child in self.children:
            child.close()

    @abstractmethod
    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        """Generate output rows."""

    @staticmethod
    def pull(child: "Operator", ctx: ExecContext) -> Iterator[Row]:
        child.open(ctx)
        try:
            while True:
                row = child.next()
                if row is None:
                    return
                yield row
        finally:
            child.close()

    def describe(self) -> str:
        return self.name

    def explain_lines(self, depth: int = 0) -> List[str]:
        lines = ["  " * depth + self.describe()]
        for child in self.children:
            lines.extend(child.explain_lines(depth + 1))
        return lines

    def explain(self) -> str:
        return "\n".join(self.explain_lines())


class Values(Operator):
    """A single empty row; the input of queries without FROM."""

    name = "Values"

    def __init__(self):
        super().__init__(Scope(()), est_rows=1.0)

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        yield ()

    def explain_lines(self, depth: int = 0) -> List[str]:
        return []


class ForeignScan(Operator):
    name = "ForeignScan"

    def __init__(self, wrapper: ForeignDataWrapper, plan: ScanPlan, binding: str, scope: Scope):
        super().__init__(scope, est_rows=plan.est_rows)
        self.wrapper = wrapper
        self.plan = plan
        self.binding = binding

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        cursor = self.wrapper.open(self.plan, ctx.stats)
        try:
            while True:
                try:
                    row = cursor.next()
                except CursorError as exc:
                    raise exc.with_context(operator=self.name)
                if row is None:
                    return
                yield row
        finally:
            cursor.close()

    def describe(self) -> str:
        table = self.plan.request.table
        alias = f" AS {self.binding}" if self.binding != table.name.name else ""
        return f"{self.name} {table.qualified}{alias} (rows={self.est_rows:g}) native: {self.plan.native_text}"


class MatViewScan(Operator):
    """Rows of a materialised view snapshot taken when the scan opens."""

    name = "MatViewScan"

    def __init__(self, view: str, reader: Callable[[], Sequence[Row]], scope: Scope, est_rows: float):
        super().__init__(scope, est_rows=est_rows)
        self.view = view
        self.reader = reader

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        snapshot = self.reader()
        yield from snapshot

    def describe(self) -> str:
        return f"{self.name} {self.view} (rows={self.est_rows:g})"


class Filter(Operator):
    name = "Filter"

    def __init__(self, child: Operator, predicate: BoundExpr):
        super().__init__(child.scope, [child], est_rows=max(child.est_rows * 0.5, 1.0))
        self.predicate = predicate

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        test = self.predicate.evaluate
        for row in self.pull(self.children[0], ctx):
            if test(row) is True:
                yield row

    def describe(self) -> str:
        return f"{self.name} {self.predicate.text}"


class Project(Operator):
    name = "Project"

    def __init__(self, child: Operator, exprs: Sequence[BoundExpr], scope: Scope, labels: Sequence[str]):
        super().__init__(scope, [child], est_rows=child.est_rows)
        self.exprs = tuple(exprs)
        self.labels = tuple(labels)

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        evaluators = [e.evaluate for e in self.exprs]
        for row in self.pull(self.children[0], ctx):
            yield tuple(f(row) for f in evaluators)

    def describe(self) -> str:
        return f"{self.name} [{', '.join(self.labels)}]"


class Extract(Operator):
    """Turn raw documents into typed rows by path access and coercion."""

    name = "Extract"

    def __init__(self, child: Operator, columns: Sequence[ColumnDef], scope: Scope, context: Dict[str, Any]):
        super().__init__(scope, [child], est_rows=child.est_rows)
        self.columns = tuple(columns)
        self.context = context

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        for (doc,) in self.pull(self.children[0], ctx):
            row_key = doc.get("_id") if isinstance(doc, dict) else None
            yield tuple(
                convert_cell(get_path(doc, column.mname), column, row_key, self.context) for column in self.columns
            )

    def describe(self) -> str:
        return f"{self.name} [{', '.join(f'{c.name} <- {c.mname}' for c in self.columns)}]"


class Unnest(Operator):
    """One row per array element.

    With a path, the column holds documents and the path is unwound with the
    document store's semantics; without one, the column itself must hold an
    array and the element replaces it.
    """

    name = "Unnest"

    def __init__(self, child: Operator, position: int, path: Optional[str] = None):
        super().__init__(child.scope, [child], est_rows=child.est_rows)
        self.position = position
        self.path = path

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        position = self.position
        for row in self.pull(self.children[0], ctx):
            value = row[position]
            if self.path is not None:
                for doc in pipeline.unwind([value], self.path):
                    yield row[:position] + (doc,) + row[position + 1:]
                continue
            if value is None:
                continue
            if not isinstance(value, list):
                raise ExecutionError(
                    f"cannot unnest non-array value {value!r}", {"column": self.scope.fields[position].name}
                )
            for element in value:
                yield row[:position] + (element,) + row[position + 1:]

    def describe(self) -> str:
        if self.path is not None:
            return f"{self.name} ${self.path}"
        return f"{self.name} {self.scope.fields[self.position].name}"


def _key(values: Sequence[Value]) -> Optional[Tuple[Any, ...]]:
    if any(v is None for v in values):
        return None
    return tuple(join_key(v) for v in values)


def _describe_keys(left: Sequence[BoundExpr], right: Sequence[BoundExpr]) -> str:
    if not left:
        return "[cross]"
    return "[" + ", ".join(f"{lk.text} = {rk.text}" for lk, rk in zip(left, right)) + "]"


class HashJoin(Operator):
    """Inner equi-join: builds a hash table on the right input, looks up the left."""

    name = "HashJoin"

    def __init__(
        self, left: Operator, right: Operator, left_keys: Sequence[BoundExpr], right_keys: Sequence[BoundExpr]
    ):
        super().__init__(left.scope + right.scope, [left, right], est_rows=max(left.est_rows, right.est_rows))
        self.left_keys = tuple(left_keys)
        self.right_keys = tuple(right_keys)

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        right_key_fns = [k.evaluate for k in self.right_keys]
        table: Dict[Tuple[Any, ...], List[Row]] = {}
        for row in self.pull(self.children[1], ctx):
            key = _key([f(row) for f in right_key_fns])
            if key is not None:
                table.setdefault(key, []).append(row)
        if not table:
            return
        left_key_fns = [k.evaluate for k in self.left_keys]
        for row in self.pull(self.children[0], ctx):
            key = _key([f(row) for f in left_key_fns])
            if key is None:
                continue
            for match in table.get(key, ()):
                yield row + match

    def describe(self) -> str:
        return f"{self.name} {_describe_keys(self.left_keys, self.right_keys)}"


class BindJoin(Operator):
    """Query the inner foreign table once per distinct outer key.

    The inner scan is re-planned with an equality filter per key column bound
    to the outer row's values, so stores with key lookups answer each one
    with a point get.
    """

    name = "BindJoin"

    def __init__(
        self,
        outer: Operator,
        wrapper: ForeignDataWrapper,
        template: ScanPlan,
        outer_keys: Sequence[BoundExpr],
        inner_columns: Sequence[ColumnDef],
        inner_scope: Scope,
        inner_filter: Optional[BoundExpr] = None,
        binding: Optional[str] = None,
        lookup_text: Optional[str] = None,
    ):
        super().__init__(outer.scope + inner_scope, [outer], est_rows=outer.est_rows)
        self.lookup_text = lookup_text or template.native_text
        self.wrapper = wrapper
        self.template = template
        self.outer_keys = tuple(outer_keys)
        self.inner_columns = tuple(inner_columns)
        self.inner_scope = inner_scope
        self.inner_filter = inner_filter
        self.binding = binding or template.request.table.name.name
        self.lookups = 0

    def _inner_rows(self, ctx: ExecContext, values: Tuple[Value, ...]) -> List[Row]:
        bindings: Dict[str, Value] = {}
        for column, value in zip(self.inner_columns, values):
            try:
                converted = coerce(value, column.type, column.name)
            except CoercionError:
                return []
            if join_key(converted) != join_key(value):
                return []
            bindings[column.name] = converted
        plan = self.wrapper.plan_scan(parametrise(self.template, bindings))
        self.lookups += 1
        names = [c.name for c in plan.output_columns]
        checks = [(names.index(p.column), p) for p in plan.residual]
        checks += [(names.index(c.name), None) for c in self.inner_columns]
        key_values = dict(zip((c.name for c in self.inner_columns), values))
        rows: List[Row] = []
        cursor = self.wrapper.open(plan, ctx.stats)
        try:
            while True:
                try:
                    row = cursor.next()
                except CursorError as exc:
                    raise exc.with_context(operator=self.name)
                if row is None:
                    break
                ok = True
                for position, predicate in checks:
                    if predicate is None:
                        expected = key_values[names[position]]
                        ok = row[position] is not None and join_key(row[position]) == join_key(expected)
                    else:
                        ok = predicate_holds(row[position], predicate)
                    if not ok:
                        break
                if ok and (self.inner_filter is None or self.inner_filter.evaluate(row) is True):
                    rows.append(row)
        finally:
            cursor.close()
        return rows

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        key_fns = [k.evaluate for k in self.outer_keys]
        memo: Dict[Tuple[Any, ...], List[Row]] = {}
        for row in self.pull(self.children[0], ctx):
            values = tuple(f(row) for f in key_fns)
            key = _key(values)
            if key is None:
                continue
            if key not in memo:
                memo[key] = self._inner_rows(ctx, values)
            for match in memo[key]:
                yield row + match

    def describe(self) -> str:
        keys = ", ".join(
            f"{k.text} = {self.binding}.{c.name}" for k, c in zip(self.outer_keys, self.inner_columns)
        )
        return f"{self.name} [{keys}]"

    def explain_lines(self, depth: int = 0) -> List[str]:
        lines = super().explain_lines(depth)
        inner_depth = depth + 1
        if self.inner_filter is not None:
            lines.append("  " * inner_depth + f"Filter {self.inner_filter.text}")
            inner_depth += 1
        table = self.template.request.table
        alias = f" AS {self.binding}" if self.binding != table.name.name else ""
        lines.append(
            "  " * inner_depth
            + f"ForeignScan {table.qualified}{alias} (parameterised) native: {self.lookup_text}"
        )
        return lines


class _Accumulator:
    def __init__(self, call: AggCall):
        self.func = call.func
        self.distinct = call.distinct
        self.count = 0
        self.total: Value = None
        self.best: Value = None
        self.seen: Dict[Any, Value] = {}

    def add(self, value: Value) -> None:
        if self.func == "COUNT" and value is _STAR:
            self.count += 1
            return
        if value is None:
            return
        if self.distinct:
            key = join_key(value)
            if key in self.seen:
                return
            self.seen[key] = value
        self.count += 1
        if self.func in ("SUM", "AVG"):
            self.total = value if self.total is None else self.total + value
        elif self.func == "MIN":
            if self.best is None or sort_key(value) < sort_key(self.best):
                self.best = value
        elif self.func == "MAX":
            if self.best is None or sort_key(value) > sort_key(self.best):
                self.best = value

    def result(self) -> Value:
        if self.func == "COUNT":
            return self.count
        if self.func == "SUM":
            return self.total
        if self.func == "AVG":
            return None if not self.count else float(self.total) / self.count  # type: ignore[arg-type]
        return self.best


_STAR = object()


class Aggregate(Operator):
    """Hash aggregation; output layout is the group values followed by the aggregates."""

    name = "Aggregate"

    def __init__(
        self,
        child: Operator,
        groups: Sequence[BoundExpr],
        aggregates: Sequence[Tuple[AggCall, Optional[BoundExpr]]],
        scope: Scope,
    ):
        est = max(child.est_rows * 0.1, 1.0) if groups else 1.0
        super().__init__(scope, [child], est_rows=est)
        self.groups = tuple(groups)
        self.aggregates = tuple(aggregates)

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        group_fns = [g.evaluate for g in self.groups]
        states: Dict[Tuple[Any, ...], Tuple[Row, List[_Accumulator]]] = {}
        for row in self.pull(self.children[0], ctx):
            values = tuple(f(row) for f in group_fns)
            key = tuple(join_key(v) for v in values)
            if key not in states:
                states[key] = (values, [_Accumulator(call) for call, _ in self.aggregates])
            accumulators = states[key][1]
            for accumulator, (_, arg) in zip(accumulators, self.aggregates):
                accumulator.add(_STAR if arg is None else arg.evaluate(row))
        if not states and not self.groups:
            states[()] = ((), [_Accumulator(call) for call, _ in self.aggregates])
        for values, accumulators in states.values():
            yield values + tuple(a.result() for a in accumulators)

    def describe(self) -> str:
        groups = ", ".join(g.text for g in self.groups)
        aggs = ", ".join(
            (f"{call.func}(*)" if arg is None else f"{call.func}({'DISTINCT ' if call.distinct else ''}{arg.text})")
            for call, arg in self.aggregates
        )
        return f"{self.name} group=[{groups}] aggs=[{aggs}]"


class Sort(Operator):
    """Stable multi-key sort; nulls first ascending, last descending."""

    name = "Sort"

    def __init__(self, child: Operator, keys: Sequence[Tuple[BoundExpr, bool]]):
        super().__init__(child.scope, [child], est_rows=child.est_rows)
        self.keys = tuple(keys)

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        rows = list(self.pull(self.children[0], ctx))
        for expr, descending in reversed(self.keys):
            fn = expr.evaluate
            rows.sort(key=lambda r, f=fn: sort_key(f(r)), reverse=descending)
        yield from rows

    def describe(self) -> str:
        keys = ", ".join(f"{e.text} DESC" if d else e.text for e, d in self.keys)
        return f"{self.name} [{keys}]"


class Limit(Operator):
    name = "Limit"

    def __init__(self, child: Operator, count: int):
        super().__init__(child.scope, [child], est_rows=min(child.est_rows, float(max(count, 1))))
        self.count = count

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        if self.count <= 0:
            return
        emitted = 0
        for row in self.pull(self.children[0], ctx):
            yield row
            emitted += 1
            if emitted >= self.count:
                return

    def describe(self) -> str:
        return f"{self.name} {self.count}"


class Distinct(Operator):
    """Drop duplicate rows, keeping first occurrences in input order."""

    name = "Distinct"

    def __init__(self, child: Operator):
        super().__init__(child.scope, [child], est_rows=child.est_rows)

    def _produce(self, ctx: ExecContext) -> Iterator[Row]:
        seen = set()
        for row in self.pull(self.children[0], ctx):
            key = tuple(join_key(v) for v in row)
            if key not in seen:
                seen.add(key)
                yield row


@dataclass
class QueryResult:
    columns: List[str]
    rows: List[Row]
    stats: Dict[str, int] = field(default_factory=dict)
    elapsed: float = 0.0


class ResultCursor:
    """Streams a plan's rows; stats are final once the cursor is exhausted."""

    def __init__(self, root: Operator, columns: Sequence[str], stats: Optional[WrapperStats] = None):
        self.root = root
        self.columns = list(columns)
        self.ctx = ExecContext(stats)
        self.root.open(self.ctx)
        self._closed = False

    @property
    def stats(self) -> WrapperStats:
        return self.ctx.stats

    def next(self) -> Optional[Row]:
        if self._closed:
            return None
        row = self.root.next()
        if row is None:
            self.close()
        return row

    def __iter__(self) -> Iterator[Row]:
        while True:
            row = self.next()
            if row is None:
                return
            yield row

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self.root.close()

    def fetchall(self) -> QueryResult:
        try:
            rows = list(self)
        finally:
            self.close()
        elapsed = time.monotonic() - self.ctx.started
        logger.debug(f"Query returned {len(rows)} rows in {elapsed:.3f}s; {self.stats!r}")
        return QueryResult(self.columns, rows, self.stats.snapshot(), elapsed)


def run(root: Operator, columns: Sequence[str], stats: Optional[WrapperStats] = None) -> ResultCursor:
    return ResultCursor(root, columns, stats)
