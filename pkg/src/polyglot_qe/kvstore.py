"""
Key-value store emulator and its wrapper.

A namespace lives in ``<data>/<namespace>.csv`` with the header ``key,value``.
The store answers lookups by key and full scans; nothing else.
"""

import csv
import io
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

from .catalog import ServerDef, StoreKind
from .errors import PolyglotError, StoreError
from .relmodel import Row, ScalarType
from .sql_ast import ColumnSpec, CreateForeignTable, QualifiedName
from .store_files import FileBackedStore
from .wrapper import (
    DEFAULT_CARDINALITY,
    Cursor,
    ForeignDataWrapper,
    ImportFailure,
    ImportResult,
    IteratorCursor,
    ScanPlan,
    ScanRequest,
    WrapperCapabilities,
    WrapperStats,
    convert_cell,
)

logger = logging.getLogger(__name__)

HEADER = ["key", "value"]


class KvStore(FileBackedStore[Dict[str, str]]):
    suffix = ".csv"
    kind = "kv"

    def _parse(self, name: str, path: Path) -> Dict[str, str]:
        entries: Dict[str, str] = {}
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != HEADER:
                raise StoreError(f"{path.name}: header must be 'key,value'")
            for number, record in enumerate(reader, start=2):
                if not record:
                    continue
                if len(record) != 2:
                    raise StoreError(f"{path.name} line {number}: expected 2 cells, got {len(record)}")
                key, value = record
                if key in entries:
                    raise StoreError(f"{path.name} line {number}: duplicate key {key!r}")
                entries[key] = value
        return entries

    def namespaces(self) -> List[str]:
        return self.names()

    def get(self, name: str, key: str) -> Optional[str]:
        return self.load(name).get(key)

    def scan(self, name: str) -> Iterator[Tuple[str, str]]:
        yield from self.load(name).items()

    def write(self, name: str, entries: Iterable[Tuple[str, str]]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(HEADER)
        count = 0
        for key, value in entries:
            writer.writerow([key, value])
            count += 1
        path = self._write_atomic(name, buffer.getvalue())
        logger.info(f"Wrote {count} entries to namespace {name!r}")
        return path


class KvWrapper(ForeignDataWrapper):
    """Full scans only: every filter, sort and limit stays with the mediator."""

    kind = StoreKind.KV
    native_capabilities = WrapperCapabilities.disabled()

    def __init__(self, server: ServerDef, pushdown_enabled: bool = True, store: Optional[KvStore] = None):
        super().__init__(server, pushdown_enabled)
        if store is None:
            if not server.data_dir:
                raise StoreError(f"server {server.name!r} has no 'data' directory option")
            store = KvStore(server.data_dir)
        self.store = store

    def plan_scan(self, request: ScanRequest) -> ScanPlan:
        table = request.table
        self.check_table(table)
        namespace = table.remote_name(self.kind)
        try:
            estimate = max(float(len(self.store.load(namespace))), 1.0)
        except PolyglotError:
            estimate = DEFAULT_CARDINALITY
        return ScanPlan(
            request=request,
            accepted=(),
            residual=request.filters,
            native_text=f"SCAN {namespace}",
            est_rows=estimate,
            output_columns=table.schema.columns,
            native={"namespace": namespace},
        )

    def open(self, plan: ScanPlan, stats: Optional[WrapperStats] = None) -> Cursor:
        stats = stats if stats is not None else WrapperStats()
        stats.add("scans")
        context = self.context(plan.request.table)
        return IteratorCursor(self._rows(plan, context), stats, context)

    def _rows(self, plan: ScanPlan, context: Dict[str, Any]) -> Iterator[Row]:
        key_column = plan.request.table.key_column
        for key, value in self.store.scan(plan.native["namespace"]):
            yield tuple(
                convert_cell(key if column.name == key_column else value, column, key, context)
                for column in plan.output_columns
            )

    def import_schema(
        self, local_schema: str, sample_limit: int, options: Optional[Dict[str, str]] = None
    ) -> ImportResult:
        result = ImportResult()
        for name in self.store.namespaces():
            try:
                self.store.load(name)
            except PolyglotError as exc:
                logger.warning(f"Import of namespace {name!r} failed: {exc}")
                result.failures.append(ImportFailure(name, str(exc)))
                continue
            columns = (ColumnSpec("key", ScalarType.TEXT), ColumnSpec("value", ScalarType.TEXT))
            result.statements.append(
                CreateForeignTable(QualifiedName(name.lower(), local_schema), columns, self.server.name, (("ns", name),))
            )
        return result
