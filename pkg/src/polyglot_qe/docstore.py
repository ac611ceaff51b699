"""
Document store emulator and its wrapper.

Collections live in ``<data>/<collection>.jsonl``: one JSON document per line,
timestamps as ``{"$date": "YYYY-MM-DD HH:MM:SS"}``. Queries run as
aggregation pipelines; the wrapper composes generated stages with a table's
own ``pipe`` fragment.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

from . import pipeline
from .catalog import ForeignTableDef, ServerDef, StoreKind
from .errors import PolyglotError, StoreError
from .inference import derive_mapping, infer, render_mapping
from .pipeline import Stage
from .relmodel import ColumnDef, Row, ScalarType, from_json, get_path, split_path, to_json
from .store_files import FileBackedStore
from .wrapper import (
    DEFAULT_CARDINALITY,
    AggregateRequest,
    Cursor,
    ForeignDataWrapper,
    ImportFailure,
    ImportResult,
    IteratorCursor,
    Predicate,
    ScanPlan,
    ScanRequest,
    SortKey,
    WrapperCapabilities,
    WrapperStats,
    convert_cell,
    estimate_rows,
)

logger = logging.getLogger(__name__)

RAW_DOCUMENT_COLUMN = "__document__"

MATCH_OPERATORS = {"=": "$eq", "<>": "$ne", "<": "$lt", "<=": "$lte", ">": "$gt", ">=": "$gte", "IN": "$in"}
PUSHABLE_AGGREGATES = ("COUNT", "MIN", "MAX", "AVG")


def conversion_operator(scalar_type: ScalarType) -> str:
    if scalar_type.is_integer:
        return "$toLong"
    if scalar_type in (ScalarType.DOUBLE, ScalarType.NUMERIC):
        return "$toDouble"
    if scalar_type is ScalarType.BOOL:
        return "$toBool"
    if scalar_type is ScalarType.TIMESTAMP:
        return "$toDate"
    return "$toString"


class DocStore(FileBackedStore[Tuple[Dict[str, Any], ...]]):
    """Collections of JSON documents, each with a unique ``_id``."""

    suffix = ".jsonl"
    kind = "docstore"

    def _parse(self, name: str, path: Path) -> Tuple[Dict[str, Any], ...]:
        docs: List[Dict[str, Any]] = []
        ids = set()
        pending: List[int] = []
        with open(path, encoding="utf-8") as f:
            for number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    doc = from_json(json.loads(line))
                except (json.JSONDecodeError, ValueError) as exc:
                    raise StoreError(f"{path.name} line {number}: invalid document: {exc}") from exc
                if not isinstance(doc, dict):
                    raise StoreError(f"{path.name} line {number}: expected a JSON object")
                if "_id" in doc:
                    key = json.dumps(to_json(doc["_id"]), sort_keys=True)
                    if key in ids:
                        raise StoreError(f"{path.name} line {number}: duplicate _id {doc['_id']!r}")
                    ids.add(key)
                else:
                    pending.append(len(docs))
                docs.append(doc)
        counter = 0
        for index in pending:
            counter += 1
            while json.dumps(f"oid:{counter}") in ids:
                counter += 1
            oid = f"oid:{counter}"
            ids.add(json.dumps(oid))
            docs[index] = {"_id": oid, **docs[index]}
        return tuple(docs)

    def collection(self, name: str) -> Tuple[Dict[str, Any], ...]:
        return self.load(name)

    def count(self, name: str) -> int:
        return len(self.load(name))

    def execute(self, name: str, stages: Iterable[Stage]) -> Iterator[Dict[str, Any]]:
        return pipeline.execute(self.collection(name), stages)

    def write_collection(self, name: str, docs: Iterable[Dict[str, Any]]) -> Path:
        lines = [json.dumps(to_json(doc), ensure_ascii=False) for doc in docs]
        path = self._write_atomic(name, "".join(line + "\n" for line in lines))
        logger.info(f"Wrote {len(lines)} documents to {self.kind} collection {name!r}")
        return path

    def insert(self, name: str, docs: Iterable[Dict[str, Any]]) -> int:
        path = self.path_for(name)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(to_json(doc), ensure_ascii=False) for doc in docs]
        with open(path, "a", encoding="utf-8") as f:
            for line in lines:
                f.write(line + "\n")
        self.invalidate(name)
        return len(lines)


def _converted(column: ColumnDef) -> Dict[str, str]:
    return {conversion_operator(column.type): "$" + column.mname}


def _match_term(predicate: Predicate, column: ColumnDef) -> Dict[str, Any]:
    """An $expr term testing the stored value, converted to the column type, against the literal."""
    op = MATCH_OPERATORS[predicate.op]
    if predicate.op == "IN":
        return {op: [_converted(column), list(predicate.value)]}
    return {op: [_converted(column), predicate.value]}


def _match_stage(terms: List[Dict[str, Any]]) -> Stage:
    return {"$match": {"$expr": terms[0] if len(terms) == 1 else {"$and": terms}}}


class DocStoreWrapper(ForeignDataWrapper):
    kind = StoreKind.DOCSTORE
    native_capabilities = WrapperCapabilities.full()

    def __init__(self, server: ServerDef, pushdown_enabled: bool = True, store: Optional[DocStore] = None):
        super().__init__(server, pushdown_enabled)
        if store is None:
            if not server.data_dir:
                raise StoreError(f"server {server.name!r} has no 'data' directory option")
            store = DocStore(server.data_dir)
        self.store = store

    def _base_rows(self, collection: str) -> float:
        try:
            return float(self.store.count(collection))
        except PolyglotError:
            return DEFAULT_CARDINALITY

    def _native_text(self, collection: str, stages: List[Stage], table: ForeignTableDef) -> str:
        text = f"db.{collection}.aggregate({pipeline.render_pipeline(stages)}"
        envelope = table.fragment.envelope if table.fragment else {}
        if envelope:
            text += ", " + json.dumps(to_json(envelope), ensure_ascii=False)
        return text + ")"

    def plan_scan(self, request: ScanRequest) -> ScanPlan:
        table = request.table
        self.check_table(table)
        caps = self.capabilities()
        collection = table.remote_name(self.kind)
        user_stages = list(table.fragment.stages) if table.fragment else []

        if not caps.projection or (user_stages and not caps.native_fragment):
            return self._raw_plan(request, collection)

        unwound = pipeline.leading_unwinds(user_stages)
        unwind_paths = unwound or []
        accepted: List[Predicate] = []
        residual: List[Predicate] = []
        pre_match: List[Dict[str, Any]] = []
        post_match: List[Dict[str, Any]] = []
        post_paths: List[str] = []

        for predicate in request.filters:
            if not caps.filter_general:
                residual.append(predicate)
                continue
            column = table.schema.column(predicate.column)
            if unwound is not None and not pipeline.traverses(column.mname, unwind_paths):
                pre_match.append(_match_term(predicate, column))
            else:
                post_match.append(_match_term(predicate, column))
                post_paths.append(column.mname)
            accepted.append(predicate)

        stages: List[Stage] = []
        if pre_match:
            stages.append(_match_stage(pre_match))
        if user_stages and unwound is not None:
            stages.append({"$project": self._root_projection(request, post_paths, unwind_paths)})
        stages.extend(user_stages)
        if post_match:
            stages.append(_match_stage(post_match))

        aggregate_accepted = False
        sort_accepted = False
        limit_accepted = False
        output_columns = request.columns()
        native: Dict[str, Any] = {"collection": collection}

        if request.aggregate is not None:
            group = self._group_stage(request.aggregate, table, caps, residual)
            if group is not None:
                stages.append({"$group": group})
                aggregate_accepted = True
                output_columns = self._aggregate_columns(request.aggregate, table)
                native["aggregate"] = request.aggregate
        if not aggregate_accepted:
            if request.sort and caps.sort and not residual and request.aggregate is None:
                stages.extend(self._sort_stages(request.sort, table, output_columns))
                sort_accepted = True
            if (
                request.limit is not None
                and caps.limit
                and not residual
                and request.aggregate is None
                and (not request.sort or sort_accepted)
            ):
                stages.append({"$limit": request.limit})
                limit_accepted = True
            stages.append({"$project": self._final_projection(output_columns)})

        stages = pipeline.simplify(stages)
        native["stages"] = stages
        estimate = estimate_rows(
            self._base_rows(collection), tuple(accepted), request.limit if limit_accepted else None
        )
        if aggregate_accepted:
            estimate = max(estimate * 0.1, 1.0)
        plan = ScanPlan(
            request=request,
            accepted=tuple(accepted),
            residual=tuple(residual),
            native_text=self._native_text(collection, stages, table),
            est_rows=estimate,
            output_columns=output_columns,
            sort_accepted=sort_accepted,
            limit_accepted=limit_accepted,
            aggregate_accepted=aggregate_accepted,
            native=native,
        )
        logger.debug(
            f"docstore plan for {table.qualified}: {len(accepted)} filters accepted, "
            f"{len(residual)} residual"
        )
        return plan

    def _raw_plan(self, request: ScanRequest, collection: str) -> ScanPlan:
        stages: List[Stage] = []
        return ScanPlan(
            request=request,
            accepted=(),
            residual=request.filters,
            native_text=self._native_text(collection, stages, request.table),
            est_rows=max(self._base_rows(collection), 1.0),
            output_columns=(ColumnDef(RAW_DOCUMENT_COLUMN, ScalarType.TEXT),),
            raw_documents=True,
            native={"collection": collection, "stages": stages},
        )

    @staticmethod
    def _root_projection(request: ScanRequest, post_paths: List[str], unwind_paths: List[str]) -> Dict[str, Any]:
        table = request.table
        paths = [c.mname for c in request.columns()]
        paths += post_paths
        paths += [table.schema.column(k.column).mname for k in request.sort]
        if request.aggregate is not None:
            paths += [table.schema.column(c).mname for c in request.aggregate.group_by]
            paths += [table.schema.column(a.column).mname for a in request.aggregate.aggregates if a.column]
        paths += unwind_paths
        roots = []
        for path in paths:
            root = split_path(path)[0]
            if root not in roots:
                roots.append(root)
        spec: Dict[str, Any] = {} if "_id" in roots else {"_id": 0}
        for root in roots:
            spec[root] = 1
        return spec

    @staticmethod
    def _final_projection(columns: Tuple[ColumnDef, ...]) -> Dict[str, Any]:
        mnames = []
        for column in columns:
            if column.mname not in mnames:
                mnames.append(column.mname)
        if not mnames:
            return {"_id": 1}
        spec: Dict[str, Any] = {} if "_id" in mnames else {"_id": 0}
        for path in mnames:
            spec[path] = 1
        return spec

    @staticmethod
    def _sort_stages(
        sort: Tuple[SortKey, ...], table: ForeignTableDef, output_columns: Tuple[ColumnDef, ...]
    ) -> List[Stage]:
        keep: Dict[str, Any] = {column.mname: 1 for column in output_columns}
        keys: Dict[str, Tuple[str, int]] = {}
        for key in sort:
            if key.column not in keys:
                keys[key.column] = (f"__sort{len(keys)}", -1 if key.descending else 1)
        for column_name, (field_name, _) in keys.items():
            keep[field_name] = _converted(table.schema.column(column_name))
        return [{"$project": keep}, {"$sort": {name: direction for name, direction in keys.values()}}]

    @staticmethod
    def _group_stage(
        aggregate: AggregateRequest, table: ForeignTableDef, caps: WrapperCapabilities, residual: List[Predicate]
    ) -> Optional[Dict[str, Any]]:
        if not caps.group_aggregate or residual or not aggregate.group_by:
            return None
        for spec in aggregate.aggregates:
            if spec.func not in PUSHABLE_AGGREGATES or spec.distinct:
                return None
            if spec.func == "COUNT" and spec.column is not None:
                return None
            if spec.func == "AVG" and not table.schema.column(spec.column).type.is_numeric:
                return None

        def converted(column_name: str) -> Dict[str, str]:
            return _converted(table.schema.column(column_name))

        group: Dict[str, Any] = {"_id": {f"g{i}": converted(c) for i, c in enumerate(aggregate.group_by)}}
        for j, spec in enumerate(aggregate.aggregates):
            if spec.func == "COUNT":
                group[f"a{j}"] = {"$count": {}}
            else:
                group[f"a{j}"] = {"$" + spec.func.lower(): converted(spec.column)}
        return group

    @staticmethod
    def _aggregate_columns(aggregate: AggregateRequest, table: ForeignTableDef) -> Tuple[ColumnDef, ...]:
        columns = [table.schema.column(c).with_changes(name=f"g{i}", options={}) for i, c in enumerate(aggregate.group_by)]
        for j, spec in enumerate(aggregate.aggregates):
            if spec.func == "COUNT":
                scalar_type = ScalarType.BIGINT
            elif spec.func == "AVG":
                scalar_type = ScalarType.DOUBLE
            else:
                scalar_type = table.schema.column(spec.column).type
            columns.append(ColumnDef(f"a{j}", scalar_type))
        return tuple(columns)

    def open(self, plan: ScanPlan, stats: Optional[WrapperStats] = None) -> Cursor:
        stats = stats if stats is not None else WrapperStats()
        stats.add("scans")
        context = self.context(plan.request.table)
        collection = plan.native["collection"]
        stages = plan.native["stages"]
        return IteratorCursor(self._rows(plan, collection, stages, context), stats, context)

    def _rows(self, plan: ScanPlan, collection: str, stages: List[Stage], context: Dict[str, Any]) -> Iterator[Row]:
        docs = self.store.execute(collection, stages)
        if plan.raw_documents:
            for doc in docs:
                yield (doc,)
            return
        if plan.aggregate_accepted:
            aggregate: AggregateRequest = plan.native["aggregate"]
            for doc in docs:
                keys = doc["_id"]
                row = [keys.get(f"g{i}") for i in range(len(aggregate.group_by))]
                row += [doc.get(f"a{j}") for j in range(len(aggregate.aggregates))]
                yield tuple(
                    convert_cell(value, column, keys, context) for value, column in zip(row, plan.output_columns)
                )
            return
        for doc in docs:
            row_key = doc.get("_id")
            yield tuple(
                convert_cell(get_path(doc, column.mname), column, row_key, context) for column in plan.output_columns
            )

    def import_schema(
        self, local_schema: str, sample_limit: int, options: Optional[Dict[str, str]] = None
    ) -> ImportResult:
        options = dict(options or {})
        parent_id = options.get("parent_id", "true").lower() not in ("false", "f", "0", "no")
        min_prob = float(options.get("min_prob", "0"))
        extra = tuple((k, v) for k, v in options.items() if k in ("encoding", "db"))
        result = ImportResult()
        for collection in self.store.names():
            try:
                docs = self.store.collection(collection)
                schema = infer(iter(docs), sample_limit, collection)
                if schema.sample_size == 0:
                    logger.info(f"Skipping empty collection {collection!r}")
                    continue
                mapping = derive_mapping(schema, parent_id=parent_id, min_prob=min_prob)
                result.statements.extend(render_mapping(mapping, self.server.name, local_schema, extra))
            except PolyglotError as exc:
                logger.warning(f"Import of collection {collection!r} failed: {exc}")
                result.failures.append(ImportFailure(collection, str(exc)))
        return result
