"""
Catalog of servers, foreign tables and materialized views.

The catalog is immutable snapshots swapped under a lock: DDL builds a new
snapshot and replaces the old one, so planners keep whatever snapshot they
resolved against. It persists as one versioned YAML file.
"""

import logging
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import (
    CatalogError,
    CatalogFormatError,
    CatalogVersionError,
    DependencyError,
    DuplicateObjectError,
    InvalidOptionError,
    KeyExprError,
    PipelineError,
    PolyglotError,
    UnknownObjectError,
    ValuePathError,
)
from .keyexpr import CompositeKeySpec, parse_spec
from .pipeline import NativeFragment, parse_pipe
from .relmodel import ColumnDef, RelSchema, ScalarType, Timestamp, split_path
from .sql_ast import (
    AddColumn,
    AlterColumnOptions,
    AlterColumnType,
    AlterForeignTable,
    AlterTableOptions,
    CreateForeignTable,
    CreateServer,
    DropColumn,
    DropForeignTable,
    OptionChange,
    QualifiedName,
    Query,
    Statement,
)
from .sql_parser import parse_query
from .sql_render import render_query

logger = logging.getLogger(__name__)

CATALOG_VERSION = 1


class StoreKind(str, Enum):
    DOCSTORE = "docstore"
    WIDECOLUMN = "widecolumn"
    KV = "kv"


DEFAULT_SCHEMAS = {StoreKind.DOCSTORE: "ymdb", StoreKind.WIDECOLUMN: "cass", StoreKind.KV: "kv"}

KIND_ALIASES = {
    "docstore": StoreKind.DOCSTORE,
    "document": StoreKind.DOCSTORE,
    "mongodb": StoreKind.DOCSTORE,
    "widecolumn": StoreKind.WIDECOLUMN,
    "wide_column": StoreKind.WIDECOLUMN,
    "cassandra": StoreKind.WIDECOLUMN,
    "kv": StoreKind.KV,
    "keyvalue": StoreKind.KV,
    "redis": StoreKind.KV,
}

REMOTE_NAME_OPTION = {StoreKind.DOCSTORE: "collection", StoreKind.WIDECOLUMN: "cf", StoreKind.KV: "ns"}
ENCODINGS = ("native", "text")


def store_kind(name: str) -> StoreKind:
    try:
        return KIND_ALIASES[name.lower()]
    except KeyError:
        raise CatalogError(
            f"unknown store kind {name!r}", {"expected": "docstore, widecolumn or kv"}
        ) from None


@dataclass(frozen=True)
class ServerDef:
    name: str
    kind: StoreKind
    options: Dict[str, str] = field(default_factory=dict)

    @property
    def default_schema(self) -> str:
        return self.options.get("schema", DEFAULT_SCHEMAS[self.kind])

    @property
    def data_dir(self) -> Optional[str]:
        return self.options.get("data")


@dataclass(frozen=True)
class ForeignTableDef:
    name: QualifiedName
    server: str
    schema: RelSchema
    options: Dict[str, str] = field(default_factory=dict)
    composite_key: Optional[CompositeKeySpec] = None
    fragment: Optional[NativeFragment] = None

    @property
    def qualified(self) -> str:
        return str(self.name)

    @property
    def key_column(self) -> str:
        return self.options.get("key_column", "key")

    def remote_name(self, kind: StoreKind) -> str:
        return self.options.get(REMOTE_NAME_OPTION[kind], self.name.name)


@dataclass(frozen=True)
class MatViewDef:
    name: QualifiedName
    query: Query
    schema: RelSchema
    refresh_interval: Optional[int] = None
    last_refreshed: Optional[Timestamp] = None
    depends_on: Tuple[str, ...] = ()

    @property
    def qualified(self) -> str:
        return str(self.name)


Relation = Union[ForeignTableDef, MatViewDef]


@dataclass(frozen=True)
class CatalogChange:
    action: str
    kind: str
    name: str
    detail: str = ""

    def __str__(self) -> str:
        text = f"{self.action.upper()} {self.kind.upper()} {self.name}"
        return f"{text} ({self.detail})" if self.detail else text


@dataclass(frozen=True)
class CatalogSnapshot:
    default_schema: str = "public"
    servers: Mapping[str, ServerDef] = field(default_factory=dict)
    tables: Mapping[str, ForeignTableDef] = field(default_factory=dict)
    views: Mapping[str, MatViewDef] = field(default_factory=dict)

    def qualify(self, name: Union[QualifiedName, str]) -> QualifiedName:
        if isinstance(name, str):
            schema, dot, local = name.partition(".")
            name = QualifiedName(local, schema) if dot else QualifiedName(schema)
        if name.schema is None:
            return QualifiedName(name.name, self.default_schema)
        return name

    def resolve(self, name: Union[QualifiedName, str]) -> Relation:
        key = str(self.qualify(name))
        if key in self.tables:
            return self.tables[key]
        if key in self.views:
            return self.views[key]
        raise UnknownObjectError(f"unknown relation {key}")

    def server(self, name: str) -> ServerDef:
        try:
            return self.servers[name]
        except KeyError:
            raise UnknownObjectError(f"unknown server {name!r}") from None

    def server_for(self, table: ForeignTableDef) -> ServerDef:
        return self.server(table.server)

    def dependents(self, qualified: str) -> List[str]:
        return sorted(v.qualified for v in self.views.values() if qualified in v.depends_on)


def _reject(option: str, message: str) -> InvalidOptionError:
    return InvalidOptionError(option, message)


def build_table(
    name: QualifiedName, server: ServerDef, columns: Tuple[ColumnDef, ...], options: Mapping[str, str]
) -> ForeignTableDef:
    """Validate a table definition against its server and derive parsed options."""
    try:
        schema = RelSchema(tuple(columns))
    except ValueError as exc:
        raise CatalogError(f"invalid columns for {name}: {exc}") from exc
    options = dict(options)
    kind = server.kind

    if "kind" in options and options["kind"].lower() not in (
        alias for alias, target in KIND_ALIASES.items() if target is kind
    ):
        raise _reject("kind", f"table declares {options['kind']!r} but server {server.name!r} is {kind.value}")

    fragment = None
    if "pipe" in options:
        if kind is not StoreKind.DOCSTORE:
            raise _reject("pipe", "native pipelines are only understood by docstore servers")
        try:
            fragment = parse_pipe(options["pipe"])
        except PipelineError as exc:
            raise _reject("pipe", exc.message) from exc

    if "encoding" in options:
        if kind is not StoreKind.DOCSTORE:
            raise _reject("encoding", "only docstore tables have a value encoding")
        if options["encoding"] not in ENCODINGS:
            raise _reject("encoding", f"must be one of {', '.join(ENCODINGS)}")

    composite = None
    for column in schema.columns:
        if "mname" in column.options:
            try:
                split_path(column.options["mname"])
            except ValuePathError as exc:
                raise _reject("mname", f"column {column.name!r}: {exc.message}") from exc
        if "composite" not in column.options:
            continue
        if kind is StoreKind.DOCSTORE:
            raise _reject("composite", "composite keys apply to widecolumn and kv tables")
        if composite is not None:
            raise _reject("composite", "only one column may carry a composite key")
        key_column = options.get("key_column", "key")
        if column.name != key_column:
            raise _reject("composite", f"the composite key belongs on the key column {key_column!r}")
        if column.type is not ScalarType.TEXT:
            raise _reject("composite", "the key column must be TEXT")
        try:
            spec = parse_spec(column.options["composite"])
        except KeyExprError as exc:
            raise _reject("composite", exc.message) from exc
        missing = [c for c in spec.columns if schema.column(c) is None]
        if missing:
            raise _reject("composite", f"unknown columns {', '.join(missing)}")
        composite = spec

    return ForeignTableDef(name, server.name, schema, options, composite, fragment)


def _apply_changes(options: Dict[str, str], changes: Tuple[OptionChange, ...], owner: str) -> Dict[str, str]:
    result = dict(options)
    for change in changes:
        if change.action == "DROP":
            if change.name not in result:
                raise _reject(change.name, f"not set on {owner}")
            del result[change.name]
        else:
            result[change.name] = change.value or ""
    return result


class Catalog:
    """Registry of servers, foreign tables and views; DDL is serialized by a lock."""

    def __init__(self, default_schema: str = "public", path: Optional[str] = None, autosave: bool = True):
        self._lock = threading.RLock()
        self._state = CatalogSnapshot(default_schema=default_schema)
        self.path = Path(path) if path else None
        self.autosave = autosave

    # reads

    def snapshot(self) -> CatalogSnapshot:
        return self._state

    def resolve(self, name: Union[QualifiedName, str]) -> Relation:
        return self._state.resolve(name)

    @property
    def default_schema(self) -> str:
        return self._state.default_schema

    # writes

    def _commit(self, state: CatalogSnapshot, change: CatalogChange) -> CatalogChange:
        self._state = state
        logger.info(f"Catalog change: {change}")
        if self.autosave and self.path is not None:
            self.save()
        return change

    def add_server(self, server: ServerDef) -> CatalogChange:
        with self._lock:
            state = self._state
            if server.name in state.servers:
                raise DuplicateObjectError(f"server {server.name!r} already exists")
            servers = {**state.servers, server.name: server}
            change = CatalogChange("create", "server", server.name, f"{server.kind.value}, schema {server.default_schema}")
            return self._commit(replace(state, servers=servers), change)

    def apply_ddl(self, statement: Statement) -> CatalogChange:
        """Execute a catalog DDL statement atomically."""
        with self._lock:
            if isinstance(statement, CreateServer):
                kind = store_kind(statement.kind)
                return self.add_server(ServerDef(statement.name, kind, dict(statement.options)))
            if isinstance(statement, CreateForeignTable):
                return self._create_table(statement)
            if isinstance(statement, AlterForeignTable):
                return self._alter_table(statement)
            if isinstance(statement, DropForeignTable):
                return self._drop_table(statement)
        raise CatalogError(f"{type(statement).__name__} is not a catalog statement")

    def _create_table(self, statement: CreateForeignTable) -> CatalogChange:
        state = self._state
        name = state.qualify(statement.name)
        key = str(name)
        if key in state.tables or key in state.views:
            raise DuplicateObjectError(f"relation {key} already exists")
        server = state.server(statement.server)
        columns = tuple(ColumnDef(c.name, c.type, dict(c.options)) for c in statement.columns)
        table = build_table(name, server, columns, dict(statement.options))
        tables = {**state.tables, key: table}
        change = CatalogChange("create", "table", key, f"{len(columns)} columns on {server.name}")
        return self._commit(replace(state, tables=tables), change)

    def _alter_table(self, statement: AlterForeignTable) -> CatalogChange:
        state = self._state
        key = str(state.qualify(statement.name))
        if key not in state.tables:
            raise UnknownObjectError(f"unknown foreign table {key}")
        table = state.tables[key]
        columns = list(table.schema.columns)
        options = dict(table.options)

        def position(column: str) -> int:
            for i, existing in enumerate(columns):
                if existing.name == column:
                    return i
            raise UnknownObjectError(f"column {column!r} does not exist in {key}")

        for action in statement.actions:
            if isinstance(action, AlterColumnOptions):
                i = position(action.column)
                merged = _apply_changes(columns[i].options, action.changes, f"column {action.column!r}")
                columns[i] = columns[i].with_changes(options=merged)
            elif isinstance(action, AlterColumnType):
                i = position(action.column)
                columns[i] = columns[i].with_changes(type=action.type)
            elif isinstance(action, AddColumn):
                if any(c.name == action.column.name for c in columns):
                    raise DuplicateObjectError(f"column {action.column.name!r} already exists in {key}")
                spec = action.column
                columns.append(ColumnDef(spec.name, spec.type, dict(spec.options)))
            elif isinstance(action, DropColumn):
                columns.pop(position(action.column))
            elif isinstance(action, AlterTableOptions):
                options = _apply_changes(options, action.changes, key)

        if not columns:
            raise CatalogError(f"cannot drop the last column of {key}")
        server = state.server(table.server)
        altered = build_table(table.name, server, tuple(columns), options)
        tables = {**state.tables, key: altered}
        change = CatalogChange("alter", "table", key, f"{len(statement.actions)} actions")
        return self._commit(replace(state, tables=tables), change)

    def _drop_table(self, statement: DropForeignTable) -> CatalogChange:
        state = self._state
        key = str(state.qualify(statement.name))
        if key not in state.tables:
            if statement.if_exists:
                return CatalogChange("skip", "table", key, "does not exist")
            raise UnknownObjectError(f"unknown foreign table {key}")
        dependents = state.dependents(key)
        if dependents:
            raise DependencyError(
                f"cannot drop {key}: materialized views depend on it", {"views": ", ".join(dependents)}
            )
        tables = {k: v for k, v in state.tables.items() if k != key}
        return self._commit(replace(state, tables=tables), CatalogChange("drop", "table", key))

    def add_view(self, view: MatViewDef) -> CatalogChange:
        with self._lock:
            state = self._state
            key = view.qualified
            if key in state.tables or key in state.views:
                raise DuplicateObjectError(f"relation {key} already exists")
            missing = [d for d in view.depends_on if d not in state.tables and d not in state.views]
            if missing:
                raise UnknownObjectError(f"view {key} references unknown relations {', '.join(missing)}")
            views = {**state.views, key: view}
            return self._commit(replace(state, views=views), CatalogChange("create", "view", key))

    def update_view(self, view: MatViewDef) -> None:
        with self._lock:
            state = self._state
            if view.qualified not in state.views:
                raise UnknownObjectError(f"unknown materialized view {view.qualified}")
            views = {**state.views, view.qualified: view}
            self._state = replace(state, views=views)
            if self.autosave and self.path is not None:
                self.save()

    def drop_view(self, name: Union[QualifiedName, str], if_exists: bool = False) -> CatalogChange:
        with self._lock:
            state = self._state
            key = str(state.qualify(name))
            if key not in state.views:
                if if_exists:
                    return CatalogChange("skip", "view", key, "does not exist")
                raise UnknownObjectError(f"unknown materialized view {key}")
            dependents = state.dependents(key)
            if dependents:
                raise DependencyError(f"cannot drop {key}: views depend on it", {"views": ", ".join(dependents)})
            views = {k: v for k, v in state.views.items() if k != key}
            return self._commit(replace(state, views=views), CatalogChange("drop", "view", key))

    # persistence

    def to_data(self) -> Dict[str, Any]:
        state = self._state
        return {
            "version": CATALOG_VERSION,
            "default_schema": state.default_schema,
            "servers": [
                {"name": s.name, "kind": s.kind.value, "options": dict(s.options)} for s in state.servers.values()
            ],
            "tables": [
                {
                    "schema": t.name.schema,
                    "name": t.name.name,
                    "server": t.server,
                    "options": dict(t.options),
                    "columns": [_column_data(c) for c in t.schema.columns],
                }
                for t in state.tables.values()
            ],
            "views": [
                {
                    "schema": v.name.schema,
                    "name": v.name.name,
                    "query": render_query(v.query),
                    "columns": [_column_data(c) for c in v.schema.columns],
                    "refresh_interval": v.refresh_interval,
                    "last_refreshed": v.last_refreshed.render() if v.last_refreshed else None,
                    "depends_on": list(v.depends_on),
                }
                for v in state.views.values()
            ],
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_data(), sort_keys=False, allow_unicode=True, default_flow_style=False)

    def save(self, path: Optional[str] = None) -> Path:
        """Write the catalog atomically (temp file + replace)."""
        target = Path(path) if path else self.path
        if target is None:
            raise CatalogError("catalog has no file path")
        with self._lock:
            text = self.dumps()
        target.parent.mkdir(parents=True, exist_ok=True)
        temp_path = target.with_suffix(target.suffix + ".tmp")
        temp_path.write_text(text, encoding="utf-8")
        temp_path.replace(target)
        logger.debug(f"Catalog saved to {target}")
        return target

    @classmethod
    def loads(cls, text: str, path: Optional[str] = None, autosave: bool = True) -> "Catalog":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
            offset = len(text[: mark.index].encode("utf-8")) if mark is not None else None
            raise CatalogFormatError(f"catalog file is not valid YAML: {exc}", offset) from exc
        if data is None:
            data = {"version": CATALOG_VERSION}
        if not isinstance(data, dict):
            raise CatalogFormatError("catalog file must hold a mapping", 0)
        version = data.get("version")
        if version != CATALOG_VERSION:
            raise CatalogVersionError(f"unsupported catalog version {version!r}; expected {CATALOG_VERSION}")
        try:
            model = _CatalogFile.model_validate(data)
        except ValidationError as exc:
            raise CatalogFormatError(f"catalog file does not match the format: {exc}") from exc

        catalog = cls(default_schema=model.default_schema, path=path, autosave=autosave)
        try:
            catalog._state = _build_state(model)
        except PolyglotError as exc:
            raise CatalogFormatError(f"catalog file is inconsistent: {exc}") from exc
        return catalog

    @classmethod
    def load(cls, path: str, autosave: bool = True) -> "Catalog":
        file_path = Path(path)
        try:
            raw = file_path.read_bytes()
        except OSError as exc:
            raise CatalogError(f"cannot read catalog file {path}: {exc}") from exc
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CatalogFormatError("catalog file is not UTF-8", exc.start) from exc
        catalog = cls.loads(text, path=str(file_path), autosave=autosave)
        logger.info(f"Catalog loaded from {path}")
        return catalog

    @classmethod
    def open(cls, path: str, default_schema: str = "public", autosave: bool = True) -> "Catalog":
        """Load the catalog at path, or start an empty one that will be saved there."""
        if Path(path).exists():
            return cls.load(path, autosave=autosave)
        return cls(default_schema=default_schema, path=path, autosave=autosave)


def _column_data(column: ColumnDef) -> Dict[str, Any]:
    data: Dict[str, Any] = {"name": column.name, "type": column.type.value}
    if column.options:
        data["options"] = dict(column.options)
    return data


class _ColumnModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    type: ScalarType
    options: Dict[str, str] = Field(default_factory=dict)


class _ServerModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    kind: StoreKind
    options: Dict[str, str] = Field(default_factory=dict)


class _TableModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_: str = Field(alias="schema")
    name: str
    server: str
    options: Dict[str, str] = Field(default_factory=dict)
    columns: List[_ColumnModel] = Field(min_length=1)


class _ViewModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_: str = Field(alias="schema")
    name: str
    query: str
    columns: List[_ColumnModel] = Field(min_length=1)
    refresh_interval: Optional[int] = Field(None, ge=1)
    last_refreshed: Optional[str] = None
    depends_on: List[str] = Field(default_factory=list)


class _CatalogFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    default_schema: str = "public"
    servers: List[_ServerModel] = Field(default_factory=list)
    tables: List[_TableModel] = Field(default_factory=list)
    views: List[_ViewModel] = Field(default_factory=list)


def _columns(models: List[_ColumnModel]) -> Tuple[ColumnDef, ...]:
    return tuple(ColumnDef(m.name, m.type, dict(m.options)) for m in models)


def _build_state(model: _CatalogFile) -> CatalogSnapshot:
    servers: Dict[str, ServerDef] = {}
    for s in model.servers:
        if s.name in servers:
            raise DuplicateObjectError(f"server {s.name!r} listed twice")
        servers[s.name] = ServerDef(s.name, s.kind, dict(s.options))

    tables: Dict[str, ForeignTableDef] = {}
    for t in model.tables:
        name = QualifiedName(t.name, t.schema_)
        if str(name) in tables:
            raise DuplicateObjectError(f"table {name} listed twice")
        if t.server not in servers:
            raise UnknownObjectError(f"table {name} references unknown server {t.server!r}")
        tables[str(name)] = build_table(name, servers[t.server], _columns(t.columns), t.options)

    views: Dict[str, MatViewDef] = {}
    for v in model.views:
        name = QualifiedName(v.name, v.schema_)
        try:
            last_refreshed = Timestamp.parse(v.last_refreshed) if v.last_refreshed else None
        except ValueError as exc:
            raise CatalogError(f"view {name}: {exc}") from exc
        views[str(name)] = MatViewDef(
            name,
            parse_query(v.query),
            RelSchema(_columns(v.columns)),
            v.refresh_interval,
            last_refreshed,
            tuple(v.depends_on),
        )
    for view in views.values():
        missing = [d for d in view.depends_on if d not in tables and d not in views]
        if missing:
            raise UnknownObjectError(f"view {view.qualified} references unknown relations {', '.join(missing)}")

    return CatalogSnapshot(model.default_schema, servers, tables, views)
