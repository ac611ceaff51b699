"""
Wide-column store emulator and its wrapper.

A column family lives in ``<data>/<family>.csv``: a header row naming the
qualifiers (one of them ``key``), then one row per row key. Every cell is
UTF-8 text and an empty cell means the qualifier is absent for that row.
"""

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

from .catalog import ForeignTableDef, ServerDef, StoreKind
from .errors import KeyExprError, PolyglotError, StoreError
from .keyexpr import key_from_equalities
from .relmodel import ColumnDef, Row, ScalarType
from .sql_ast import ColumnSpec, CreateForeignTable, QualifiedName
from .sql_render import quote_string
from .store_files import FileBackedStore
from .wrapper import (
    DEFAULT_CARDINALITY,
    Cursor,
    ForeignDataWrapper,
    ImportFailure,
    ImportResult,
    IteratorCursor,
    Predicate,
    ScanPlan,
    ScanRequest,
    WrapperCapabilities,
    WrapperStats,
    convert_cell,
)

logger = logging.getLogger(__name__)

KEY_QUALIFIER = "key"


@dataclass(frozen=True)
class ColumnFamily:
    name: str
    qualifiers: Tuple[str, ...]
    rows: Dict[str, Dict[str, str]]

    def __len__(self) -> int:
        return len(self.rows)


class WideColumnStore(FileBackedStore[ColumnFamily]):
    """Column families keyed by text row keys, kept in key order."""

    suffix = ".csv"
    kind = "widecolumn"

    def _parse(self, name: str, path: Path) -> ColumnFamily:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if not header or KEY_QUALIFIER not in header:
                raise StoreError(f"{path.name}: header row must include a {KEY_QUALIFIER!r} column")
            if len(set(header)) != len(header):
                raise StoreError(f"{path.name}: duplicate qualifier in header")
            key_index = header.index(KEY_QUALIFIER)
            rows: Dict[str, Dict[str, str]] = {}
            for number, record in enumerate(reader, start=2):
                if not record:
                    continue
                if len(record) != len(header):
                    raise StoreError(f"{path.name} line {number}: expected {len(header)} cells, got {len(record)}")
                key = record[key_index]
                if not key:
                    raise StoreError(f"{path.name} line {number}: empty row key")
                if key in rows:
                    raise StoreError(f"{path.name} line {number}: duplicate row key {key!r}")
                rows[key] = {q: cell for q, cell in zip(header, record) if q != KEY_QUALIFIER and cell != ""}
        qualifiers = tuple(q for q in header if q != KEY_QUALIFIER)
        return ColumnFamily(name, qualifiers, {key: rows[key] for key in sorted(rows)})

    def families(self) -> List[str]:
        return self.names()

    def family(self, name: str) -> ColumnFamily:
        return self.load(name)

    def get(self, name: str, key: str) -> Optional[Dict[str, str]]:
        return self.family(name).rows.get(key)

    def scan(self, name: str) -> Iterator[Tuple[str, Dict[str, str]]]:
        yield from self.family(name).rows.items()

    def write_family(
        self, name: str, rows: Iterable[Tuple[str, Dict[str, str]]], qualifiers: Optional[Iterable[str]] = None
    ) -> Path:
        rows = list(rows)
        if qualifiers is None:
            seen: Dict[str, None] = {}
            for _, cells in rows:
                seen.update(dict.fromkeys(cells))
            qualifiers = list(seen)
        header = [KEY_QUALIFIER] + [q for q in qualifiers if q != KEY_QUALIFIER]
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for key, cells in rows:
            writer.writerow([key] + [cells.get(q, "") for q in header[1:]])
        path = self._write_atomic(name, buffer.getvalue())
        logger.info(f"Wrote {len(rows)} rows to column family {name!r}")
        return path


class WideColumnWrapper(ForeignDataWrapper):
    kind = StoreKind.WIDECOLUMN
    native_capabilities = WrapperCapabilities(filter_eq_on_key=True, projection=True, limit=True)

    def __init__(self, server: ServerDef, pushdown_enabled: bool = True, store: Optional[WideColumnStore] = None):
        super().__init__(server, pushdown_enabled)
        if store is None:
            if not server.data_dir:
                raise StoreError(f"server {server.name!r} has no 'data' directory option")
            store = WideColumnStore(server.data_dir)
        self.store = store

    @staticmethod
    def _qualifier(table: ForeignTableDef, column: ColumnDef) -> str:
        return KEY_QUALIFIER if column.name == table.key_column else column.mname

    def _lookup_key(self, table: ForeignTableDef, filters: Tuple[Predicate, ...]) -> Tuple[Optional[str], List[Predicate]]:
        equalities: Dict[str, Predicate] = {}
        for predicate in filters:
            if predicate.op == "=" and predicate.column not in equalities:
                equalities[predicate.column] = predicate
        if table.composite_key is not None:
            bound = {c: p.value for c, p in equalities.items()}
            try:
                key = key_from_equalities(table.composite_key, bound)
            except KeyExprError:
                key = None
            if key is not None:
                return key, [equalities[c] for c in table.composite_key.columns]
        predicate = equalities.get(table.key_column)
        if predicate is not None and isinstance(predicate.value, str):
            return predicate.value, [predicate]
        return None, []

    def plan_scan(self, request: ScanRequest) -> ScanPlan:
        table = request.table
        self.check_table(table)
        caps = self.capabilities()
        family = table.remote_name(self.kind)

        key, used = self._lookup_key(table, request.filters) if caps.filter_eq_on_key else (None, [])
        accepted = tuple(p for p in request.filters if any(p is u for u in used))
        residual = tuple(p for p in request.filters if not any(p is u for u in used))
        limit_accepted = request.limit is not None and caps.limit and not residual and not request.sort

        columns = request.columns() if caps.projection else table.schema.columns
        selected = ", ".join(self._qualifier(table, c) for c in columns) or KEY_QUALIFIER
        native_text = f"SELECT {selected} FROM {family}"
        if key is not None:
            native_text += f" WHERE {KEY_QUALIFIER} = {quote_string(key)}"
        if limit_accepted:
            native_text += f" LIMIT {request.limit}"

        if key is not None:
            estimate = 1.0
        else:
            try:
                estimate = float(len(self.store.family(family)))
            except PolyglotError:
                estimate = DEFAULT_CARDINALITY
            if limit_accepted:
                estimate = min(estimate, float(request.limit))
            estimate = max(estimate, 1.0)
        logger.debug(f"widecolumn plan for {table.qualified}: key lookup {key!r}, {len(residual)} residual")
        return ScanPlan(
            request=request,
            accepted=accepted,
            residual=residual,
            native_text=native_text,
            est_rows=estimate,
            output_columns=tuple(columns),
            limit_accepted=limit_accepted,
            native={"family": family, "key": key, "limit": request.limit if limit_accepted else None},
        )

    def open(self, plan: ScanPlan, stats: Optional[WrapperStats] = None) -> Cursor:
        stats = stats if stats is not None else WrapperStats()
        context = self.context(plan.request.table)
        family = plan.native["family"]
        key = plan.native["key"]
        if key is not None:
            stats.add("point_gets")
        else:
            stats.add("scans")
        return IteratorCursor(self._rows(plan, family, key, context), stats, context)

    def _rows(self, plan: ScanPlan, family: str, key: Optional[str], context: Dict[str, Any]) -> Iterator[Row]:
        table = plan.request.table
        if key is not None:
            cells = self.store.get(family, key)
            entries: Iterable[Tuple[str, Dict[str, str]]] = [] if cells is None else [(key, cells)]
        else:
            entries = self.store.scan(family)
        limit = plan.native["limit"]
        emitted = 0
        for row_key, cells in entries:
            if limit is not None and emitted >= limit:
                return
            row = []
            for column in plan.output_columns:
                qualifier = self._qualifier(table, column)
                raw = row_key if qualifier == KEY_QUALIFIER else cells.get(qualifier)
                row.append(convert_cell(raw, column, row_key, context))
            emitted += 1
            yield tuple(row)

    def import_schema(
        self, local_schema: str, sample_limit: int, options: Optional[Dict[str, str]] = None
    ) -> ImportResult:
        result = ImportResult()
        for name in self.store.families():
            try:
                family = self.store.family(name)
            except PolyglotError as exc:
                logger.warning(f"Import of column family {name!r} failed: {exc}")
                result.failures.append(ImportFailure(name, str(exc)))
                continue
            columns = [ColumnSpec(KEY_QUALIFIER, ScalarType.TEXT)]
            taken = {KEY_QUALIFIER}
            for qualifier in family.qualifiers:
                column_name = qualifier.lower()
                if column_name in taken:
                    logger.warning(f"Skipping qualifier {qualifier!r} of {name!r}: name clash")
                    continue
                taken.add(column_name)
                column_options = () if column_name == qualifier else (("mname", qualifier),)
                columns.append(ColumnSpec(column_name, ScalarType.TEXT, column_options))
            result.statements.append(
                CreateForeignTable(
                    QualifiedName(name.lower(), local_schema), tuple(columns), self.server.name, (("cf", name),)
                )
            )
        return result
