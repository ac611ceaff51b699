"""
Schema discovery for document collections.

infer() builds a probabilistic schema from a sample: every dot path seen, how
often it occurs and the mix of types observed there. derive_mapping() turns
that into relational tables: one outer table for the document fields and one
child table per nested array, with the unwind stages needed to flatten it.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .relmodel import ScalarType, StructKind, Value, type_of
from .sql_ast import ColumnSpec, CreateForeignTable, QualifiedName

logger = logging.getLogger(__name__)

TypeTag = Union[ScalarType, StructKind]

PARENT_ID_COLUMN = "_parent_id"
VALUE_COLUMN = "value"


@dataclass(frozen=True)
class FieldStat:
    occurrence_prob: float
    type_histogram: Dict[TypeTag, float]
    # element types of scalar array members (empty unless the path holds arrays)
    element_histogram: Dict[TypeTag, float] = field(default_factory=dict)

    @property
    def resolved_type(self) -> TypeTag:
        return resolve_type(self.type_histogram)


@dataclass(frozen=True)
class ProbabilisticSchema:
    collection: str
    sample_size: int
    fields: Dict[str, FieldStat]

    def array_paths(self) -> List[str]:
        return [p for p, stat in self.fields.items() if stat.resolved_type is StructKind.ARRAY]


@dataclass(frozen=True)
class TableDraft:
    name: str
    columns: Tuple[ColumnSpec, ...]
    unwind_paths: Tuple[str, ...] = ()

    @property
    def pipe(self) -> Optional[str]:
        if not self.unwind_paths:
            return None
        return json.dumps([{"$unwind": "$" + path} for path in self.unwind_paths])


@dataclass(frozen=True)
class RelationalMapping:
    collection: str
    tables: Tuple[TableDraft, ...]


class _PathCounter:
    def __init__(self):
        self.documents = 0
        self.types: Counter = Counter()
        self.elements: Counter = Counter()


def resolve_type(histogram: Dict[TypeTag, float]) -> TypeTag:
    """Majority type; ties (and empty histograms) resolve to TEXT."""
    if not histogram:
        return ScalarType.TEXT
    best = max(histogram.values())
    winners = [tag for tag, share in histogram.items() if share == best]
    return winners[0] if len(winners) == 1 else ScalarType.TEXT


def _normalise(counts: Counter) -> Dict[TypeTag, float]:
    total = sum(counts.values())
    return {tag: n / total for tag, n in counts.items()} if total else {}


def infer(docs: Iterable[Dict[str, Value]], sample_limit: int, collection: str = "") -> ProbabilisticSchema:
    """Scan the first sample_limit documents and record path occurrence and type mix."""
    if sample_limit < 1:
        raise ValueError("sample_limit must be at least 1")
    counters: Dict[str, _PathCounter] = {}
    sample_size = 0

    def record(path: str, value: Value, seen: set) -> None:
        counter = counters.setdefault(path, _PathCounter())
        if path not in seen:
            seen.add(path)
            counter.documents += 1
        tag = type_of(value)
        if tag is None:
            return
        counter.types[tag] += 1
        if isinstance(value, dict):
            visit(value, path + ".", seen)
        elif isinstance(value, list):
            for element in value:
                if isinstance(element, dict):
                    visit(element, path + ".", seen)
                elif isinstance(element, list):
                    counter.elements[StructKind.ARRAY] += 1
                elif element is not None:
                    counter.elements[type_of(element)] += 1

    def visit(doc: Dict[str, Value], prefix: str, seen: set) -> None:
        for key, value in doc.items():
            record(prefix + key, value, seen)

    for doc in docs:
        if sample_size >= sample_limit:
            break
        sample_size += 1
        visit(doc, "", set())

    fields = {
        path: FieldStat(
            counter.documents / sample_size,
            _normalise(counter.types),
            _normalise(counter.elements),
        )
        for path, counter in counters.items()
    }
    logger.debug(f"Inferred {len(fields)} paths from {sample_size} documents of {collection!r}")
    return ProbabilisticSchema(collection, sample_size, fields)


def _column_type(tag: TypeTag) -> ScalarType:
    return tag if isinstance(tag, ScalarType) else ScalarType.TEXT


def _unique(name: str, taken: set) -> str:
    candidate = name
    suffix = 2
    while candidate in taken:
        candidate = f"{name}_{suffix}"
        suffix += 1
    taken.add(candidate)
    return candidate


def derive_mapping(
    schema: ProbabilisticSchema,
    parent_id: bool = True,
    min_prob: float = 0.0,
    table_name: Optional[str] = None,
) -> RelationalMapping:
    """Outer table for document fields plus one child table per array path."""
    outer = (table_name or schema.collection).lower()
    arrays = schema.array_paths()

    def owner(path: str) -> Optional[str]:
        enclosing = [a for a in arrays if path.startswith(a + ".")]
        return max(enclosing, key=len) if enclosing else None

    def enclosing_arrays(path: str) -> Tuple[str, ...]:
        return tuple(sorted((a for a in arrays if path == a or path.startswith(a + ".")), key=len))

    columns: Dict[Optional[str], List[ColumnSpec]] = {None: []}
    taken: Dict[Optional[str], set] = {None: set()}
    for array in arrays:
        columns[array] = []
        taken[array] = set()

    id_stat = schema.fields.get("_id")
    if id_stat is not None:
        taken[None].add("_id")
        columns[None].append(ColumnSpec("_id", _column_type(id_stat.resolved_type), (("mname", "_id"),)))

    for path, stat in schema.fields.items():
        if path == "_id" or stat.occurrence_prob < min_prob:
            continue
        resolved = stat.resolved_type
        if resolved in (StructKind.ARRAY, StructKind.DOCUMENT):
            continue
        table = owner(path)
        relative = path if table is None else path[len(table) + 1:]
        name = _unique(relative.replace(".", "_").lower(), taken[table])
        columns[table].append(ColumnSpec(name, _column_type(resolved), (("mname", path),)))

    tables = [TableDraft(outer, tuple(columns[None]))]
    for array in arrays:
        stat = schema.fields[array]
        if stat.occurrence_prob < min_prob:
            continue
        child_columns = list(columns[array])
        if not child_columns:
            element_type = _column_type(resolve_type(stat.element_histogram))
            child_columns.append(ColumnSpec(VALUE_COLUMN, element_type, (("mname", array),)))
        if parent_id and id_stat is not None:
            parent = ColumnSpec(PARENT_ID_COLUMN, _column_type(id_stat.resolved_type), (("mname", "_id"),))
            child_columns.insert(0, parent)
        name = f"{outer}_{array.replace('.', '_').lower()}"
        tables.append(TableDraft(name, tuple(child_columns), enclosing_arrays(array)))
    if not tables[0].columns:
        tables = tables[1:]
    return RelationalMapping(schema.collection, tuple(tables))


def render_mapping(
    mapping: RelationalMapping, server: str, local_schema: str, extra_options: Tuple[Tuple[str, str], ...] = ()
) -> List[CreateForeignTable]:
    """CREATE FOREIGN TABLE statements for a mapping."""
    statements = []
    for draft in mapping.tables:
        options = [("collection", mapping.collection)]
        if draft.pipe:
            options.append(("pipe", draft.pipe))
        options.extend(extra_options)
        statements.append(
            CreateForeignTable(QualifiedName(draft.name, local_schema), draft.columns, server, tuple(options))
        )
    return statements
