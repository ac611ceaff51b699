"""
Query engine controller: owns the catalog, one wrapper per server, the
materialized views and the planner settings, and executes SQL statements.
"""

import csv
import json
import logging
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Type

from .catalog import Catalog, ForeignTableDef, MatViewDef, ServerDef, StoreKind, store_kind
from .docstore import DocStore, DocStoreWrapper
from .errors import CatalogError, MatViewError, PolyglotError, StoreError
from .executor import QueryResult, ResultCursor, run
from .kvstore import KvStore, KvWrapper
from .matview import MatViewManager, MatViewStorage, RefreshReport
from .planner import LogicalPlan, Planner, PlannerOptions
from .relmodel import ColumnDef, RelSchema, Row, ScalarType, Timestamp, from_json
from .settings import AppSettings, get_settings
from .sql_ast import (
    DDL_STATEMENTS,
    CreateMaterializedView,
    DropMaterializedView,
    Explain,
    ImportForeignSchema,
    Query,
    RefreshMaterializedView,
    Select,
    Statement,
    table_refs,
)
from .sql_lexer import split_statements
from .sql_parser import parse, parse_query
from .sql_render import render
from .wrapper import ForeignDataWrapper, ImportResult, WrapperStats
from .widecolumn import WideColumnStore, WideColumnWrapper

logger = logging.getLogger(__name__)

WRAPPERS: Dict[StoreKind, Type[ForeignDataWrapper]] = {
    StoreKind.DOCSTORE: DocStoreWrapper,
    StoreKind.WIDECOLUMN: WideColumnWrapper,
    StoreKind.KV: KvWrapper,
}


@dataclass
class StatementResult:
    """Outcome of one statement: rows for queries, text for everything else."""

    statement: Statement
    result: Optional[QueryResult] = None
    message: str = ""


@dataclass
class ImportOutcome:
    server: str
    local_schema: str
    result: ImportResult
    applied: List[str] = field(default_factory=list)

    def ddl(self) -> List[str]:
        return [render(s) + ";" for s in self.result.statements]


class QueryEngine:
    """Thread-safe facade over catalog, wrappers, planner, executor and views."""

    def __init__(
        self,
        settings: Optional[AppSettings] = None,
        catalog: Optional[Catalog] = None,
        clock: Callable[[], Timestamp] = Timestamp.now,
    ):
        self.settings = settings or get_settings()
        if catalog is None:
            catalog = Catalog.open(
                self.settings.catalog.catalog_path,
                default_schema=self.settings.catalog.default_schema,
                autosave=self.settings.catalog.autosave,
            )
        self.catalog = catalog
        self.force_join: Optional[str] = None
        self._wrappers: Dict[str, ForeignDataWrapper] = {}
        self._lock = threading.RLock()
        self.matviews = MatViewManager(
            self.catalog, MatViewStorage(self.settings.storage.views_dir), self.run_query, clock
        )
        self.matviews.restore()
        logger.info(
            f"Engine ready: {len(catalog.snapshot().servers)} servers, {len(catalog.snapshot().tables)} tables, "
            f"{len(catalog.snapshot().views)} views"
        )

    # wrappers

    def _server_with_data(self, server: ServerDef) -> ServerDef:
        if server.data_dir:
            return server
        options = {**server.options, "data": os.path.join(self.settings.storage.data_dir, server.name)}
        return replace(server, options=options)

    def wrapper_for_server(self, server: ServerDef) -> ForeignDataWrapper:
        pushdown = self.settings.planner.pushdown_enabled
        with self._lock:
            wrapper = self._wrappers.get(server.name)
            resolved = self._server_with_data(server)
            if wrapper is None or wrapper.server != resolved or wrapper.pushdown_enabled != pushdown:
                wrapper = WRAPPERS[server.kind](resolved, pushdown)
                self._wrappers[server.name] = wrapper
                logger.debug(f"Created {server.kind.value} wrapper for server {server.name!r}")
            return wrapper

    def wrapper_for_table(self, table: ForeignTableDef) -> ForeignDataWrapper:
        return self.wrapper_for_server(self.catalog.snapshot().server_for(table))

    def store_for(self, server_name: str):
        wrapper = self.wrapper_for_server(self.catalog.snapshot().server(server_name))
        return wrapper.store  # type: ignore[attr-defined]

    # queries

    def planner(self) -> Planner:
        options = PlannerOptions(
            bind_join_threshold=self.settings.planner.bind_join_threshold,
            force_join=self.force_join,
            cnf_max_conjuncts=self.settings.planner.cnf_max_conjuncts,
        )
        return Planner(self.catalog.snapshot(), self.wrapper_for_table, self.matviews, options)

    def plan(self, query: Query) -> LogicalPlan:
        return self.planner().plan(query)

    def explain(self, sql: str) -> str:
        statement = parse(sql)
        if isinstance(statement, Explain):
            statement = Select(statement.query)
        if not isinstance(statement, Select):
            raise PolyglotError("only queries can be explained")
        return self.plan(statement.query).explain()

    def cursor(self, query: Query) -> ResultCursor:
        plan = self.plan(query)
        return run(plan.root, plan.columns, WrapperStats())

    def run_query(self, query: Query) -> QueryResult:
        return self.cursor(query).fetchall()

    def query(self, sql: str) -> QueryResult:
        return self.run_query(parse_query(sql))

    # statements

    def execute(self, sql: str) -> List[StatementResult]:
        """Run every ;-separated statement of sql in order, stopping at the first error."""
        return [self.execute_statement(parse(text)) for text in split_statements(sql)]

    def execute_statement(self, statement: Statement) -> StatementResult:
        if isinstance(statement, Select):
            return StatementResult(statement, result=self.run_query(statement.query))
        if isinstance(statement, Explain):
            return StatementResult(statement, message=self.plan(statement.query).explain())
        if isinstance(statement, ImportForeignSchema):
            options = dict(statement.options)
            sample = options.pop("sample", None)
            if sample is not None and not sample.isdigit():
                raise CatalogError(f"sample option must be a positive integer, got {sample!r}")
            outcome = self.import_schema(
                statement.server,
                statement.local_schema,
                sample=int(sample) if sample is not None else None,
                options=options,
                apply=True,
            )
            message = f"IMPORT FOREIGN SCHEMA {len(outcome.applied)} tables"
            if outcome.result.failures:
                message += "; failed: " + ", ".join(f"{f.source} ({f.message})" for f in outcome.result.failures)
            return StatementResult(statement, message=message)
        if isinstance(statement, DDL_STATEMENTS):
            change = self.catalog.apply_ddl(statement)
            return StatementResult(statement, message=str(change))
        if isinstance(statement, CreateMaterializedView):
            report = self.create_view(statement)
            return StatementResult(statement, message=f"CREATE MATERIALIZED VIEW {report.name} ({report.rows} rows)")
        if isinstance(statement, RefreshMaterializedView):
            report = self.matviews.refresh(str(self.catalog.snapshot().qualify(statement.name)))
            return StatementResult(
                statement, message=f"REFRESH MATERIALIZED VIEW {report.name} ({report.rows} rows, {report.duration:.3f}s)"
            )
        if isinstance(statement, DropMaterializedView):
            self.matviews.drop_view(statement.name, statement.if_exists)
            return StatementResult(statement, message=f"DROP MATERIALIZED VIEW {statement.name}")
        raise PolyglotError(f"unsupported statement {type(statement).__name__}")

    # views

    def create_view(self, statement: CreateMaterializedView) -> RefreshReport:
        snapshot = self.catalog.snapshot()
        name = snapshot.qualify(statement.name)
        plan = self.plan(statement.query)
        types = [f.type or ScalarType.TEXT for f in plan.root.scope.fields]
        try:
            schema = RelSchema(tuple(ColumnDef(c, t) for c, t in zip(plan.columns, types)))
        except ValueError as exc:
            raise MatViewError(f"cannot create {name}: {exc}") from exc
        depends_on = tuple(
            dict.fromkeys(str(snapshot.qualify(ref.name)) for ref in table_refs(statement.query.from_items))
        )
        view = MatViewDef(name, statement.query, schema, statement.refresh_interval, None, depends_on)
        return self.matviews.create_view(view)

    def view_rows(self, name: str) -> Sequence[Row]:
        return self.matviews.rows(str(self.catalog.snapshot().qualify(name)))

    # servers, loading and import

    def add_server(self, name: str, kind: str, data: Optional[str] = None, options: Optional[Dict[str, str]] = None):
        server_options = dict(options or {})
        if data:
            server_options["data"] = data
        return self.catalog.add_server(ServerDef(name, store_kind(kind), server_options))

    def load_file(self, server_name: str, object_name: str, path: str) -> int:
        """Replace a collection / column family / namespace with the contents of a file."""
        server = self.catalog.snapshot().server(server_name)
        store = self.store_for(server_name)
        source = Path(path)
        if not source.is_file():
            raise StoreError(f"input file {path} does not exist")
        if server.kind is StoreKind.DOCSTORE:
            docs = self._read_documents(source)
            assert isinstance(store, DocStore)
            store.write_collection(object_name, docs)
            return len(docs)
        with open(source, newline="", encoding="utf-8") as f:
            records = list(csv.DictReader(f))
        if server.kind is StoreKind.WIDECOLUMN:
            assert isinstance(store, WideColumnStore)
            if records and "key" not in records[0]:
                raise StoreError(f"{path}: header row must include a 'key' column")
            rows = [(r["key"], {q: v for q, v in r.items() if q != "key" and v}) for r in records]
            store.write_family(object_name, rows)
            return len(rows)
        assert isinstance(store, KvStore)
        if records and set(records[0]) != {"key", "value"}:
            raise StoreError(f"{path}: header must be 'key,value'")
        store.write(object_name, ((r["key"], r["value"]) for r in records))
        return len(records)

    @staticmethod
    def _read_documents(source: Path) -> List[dict]:
        text = source.read_text(encoding="utf-8")
        try:
            if text.lstrip().startswith("["):
                data = json.loads(text)
            else:
                data = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise StoreError(f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not all(isinstance(d, dict) for d in data):
            raise StoreError(f"{source}: every document must be a JSON object")
        return [from_json(d) for d in data]

    def import_schema(
        self,
        server_name: str,
        local_schema: Optional[str] = None,
        sample: Optional[int] = None,
        options: Optional[Dict[str, str]] = None,
        apply: bool = False,
    ) -> ImportOutcome:
        server = self.catalog.snapshot().server(server_name)
        wrapper = self.wrapper_for_server(server)
        import_options = {
            "parent_id": str(self.settings.inference.parent_id).lower(),
            "min_prob": str(self.settings.inference.min_prob),
            **(options or {}),
        }
        schema = local_schema or server.default_schema
        limit = sample if sample is not None else self.settings.inference.sample_limit
        if limit < 1:
            raise CatalogError("sample limit must be at least 1")
        result = wrapper.import_schema(schema, limit, import_options)
        outcome = ImportOutcome(server_name, schema, result)
        if apply:
            for statement in result.statements:
                try:
                    outcome.applied.append(str(self.catalog.apply_ddl(statement)))
                except CatalogError as exc:
                    logger.warning(f"Skipping {statement.name}: {exc}")
        logger.info(
            f"Imported schema of {server_name}: {len(result.statements)} tables, {len(result.failures)} failures"
        )
        return outcome

    def close(self) -> None:
        self.matviews.stop()
        with self._lock:
            self._wrappers.clear()
