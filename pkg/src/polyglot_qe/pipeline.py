"""
Aggregation-pipeline language understood by the document store.

Stages are plain dicts with a single operator key, exactly as they appear in
JSON: ``{"$match": {...}}``, ``{"$project": {...}}``, ``{"$unwind": "$path"}``,
``{"$sort": {...}}``, ``{"$limit": n}`` and ``{"$group": {...}}``. A ``$match`` may
hold an ``$expr`` whose comparisons take a path or conversion on the left and a
literal on the right.
"""

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

from .errors import PipelineError, ValuePathError
from .relmodel import (
    ScalarType,
    Value,
    coerce,
    compare,
    from_json,
    get_path,
    is_number,
    join_key,
    set_path,
    sort_key,
    split_path,
    to_json,
)

Stage = Dict[str, Any]

STAGES = ("$match", "$project", "$unwind", "$sort", "$limit", "$group")
MATCH_OPS = ("$eq", "$ne", "$gt", "$gte", "$lt", "$lte", "$in")
ACCUMULATORS = ("$sum", "$avg", "$min", "$max", "$count")

CONVERSIONS: Dict[str, ScalarType] = {
    "$toLong": ScalarType.BIGINT,
    "$toInt": ScalarType.INT,
    "$toDouble": ScalarType.DOUBLE,
    "$toString": ScalarType.TEXT,
    "$toBool": ScalarType.BOOL,
    "$toDate": ScalarType.TIMESTAMP,
}

# envelope keys accepted alongside "pipeline"; they do not change results
ENVELOPE_KEYS = ("allowDiskUse", "$readPreference", "cursor", "comment")


@dataclass(frozen=True)
class NativeFragment:
    """A user-supplied pipeline plus any envelope options it carried."""

    stages: Tuple[Stage, ...] = ()
    envelope: Dict[str, Any] = field(default_factory=dict)


def stage_name(stage: Stage) -> str:
    return next(iter(stage))


def parse_pipe(text: str) -> NativeFragment:
    """Parse a ``pipe`` option value: a JSON array of stages or an envelope object."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PipelineError(f"pipe is not valid JSON: {exc.msg}", {"offset": exc.pos}) from exc

    envelope: Dict[str, Any] = {}
    if isinstance(data, dict):
        if "pipeline" not in data:
            raise PipelineError("pipe envelope needs a 'pipeline' key")
        for key in data:
            if key != "pipeline" and key not in ENVELOPE_KEYS:
                raise PipelineError(f"unsupported pipe envelope key {key!r}")
        envelope = {k: v for k, v in data.items() if k != "pipeline"}
        data = data["pipeline"]
    if not isinstance(data, list):
        raise PipelineError("pipe must be a JSON array of stages")
    stages = tuple(from_json(stage) for stage in data)
    for stage in stages:
        validate_stage(stage)
    return NativeFragment(stages, envelope)


def _path_operand(operand: Any, what: str) -> str:
    if not isinstance(operand, str) or not operand.startswith("$") or len(operand) < 2:
        raise PipelineError(f"{what} must be a '$path' string, got {operand!r}")
    path = operand[1:]
    try:
        split_path(path)
    except ValuePathError as exc:
        raise PipelineError(str(exc)) from exc
    return path


def unwind_path(stage: Stage) -> str:
    operand = stage["$unwind"]
    if isinstance(operand, dict):
        operand = operand.get("path")
    return _path_operand(operand, "$unwind")


def _validate_expression(operand: Any, what: str) -> None:
    if isinstance(operand, str):
        _path_operand(operand, what)
    elif isinstance(operand, dict):
        if len(operand) != 1 or next(iter(operand)) not in CONVERSIONS:
            raise PipelineError(f"unsupported expression in {what}: {operand!r}")
        _path_operand(next(iter(operand.values())), what)
    elif not (operand is None or is_number(operand) or isinstance(operand, bool)):
        raise PipelineError(f"unsupported operand in {what}: {operand!r}")


def _validate_match_expression(expr: Any) -> None:
    if not isinstance(expr, dict) or len(expr) != 1:
        raise PipelineError(f"$expr needs an object with one operator: {expr!r}")
    op, args = next(iter(expr.items()))
    if op == "$and":
        if not isinstance(args, list) or not args:
            raise PipelineError("$and needs a non-empty array")
        for term in args:
            _validate_match_expression(term)
        return
    if op not in MATCH_OPS:
        raise PipelineError(f"unsupported $expr operator {op!r}")
    if not isinstance(args, list) or len(args) != 2:
        raise PipelineError(f"{op} in $expr needs two operands")
    _validate_expression(args[0], "$expr")
    if op == "$in" and not isinstance(args[1], list):
        raise PipelineError("$in needs an array")


def validate_stage(stage: Any) -> None:
    if not isinstance(stage, dict) or len(stage) != 1:
        raise PipelineError(f"a stage must be an object with one operator: {stage!r}")
    name = stage_name(stage)
    body = stage[name]
    if name not in STAGES:
        raise PipelineError(f"unknown stage {name!r}")
    if name == "$match":
        if not isinstance(body, dict):
            raise PipelineError("$match needs an object")
        for path, condition in body.items():
            if path == "$expr":
                _validate_match_expression(condition)
                continue
            _path_operand("$" + path, "$match path")
            if isinstance(condition, dict) and condition and all(k.startswith("$") for k in condition):
                for op, literal in condition.items():
                    if op not in MATCH_OPS:
                        raise PipelineError(f"unsupported match operator {op!r}")
                    if op == "$in" and not isinstance(literal, list):
                        raise PipelineError("$in needs an array")
    elif name == "$project":
        if not isinstance(body, dict) or not body:
            raise PipelineError("$project needs a non-empty object")
        for key, rule in body.items():
            if rule in (0, False) and not isinstance(rule, str):
                if key != "_id":
                    raise PipelineError("field exclusion is only supported for _id")
            elif rule in (1, True) and not isinstance(rule, str):
                _path_operand("$" + key, "$project path")
            else:
                if "." in key:
                    raise PipelineError(f"computed field names cannot contain dots: {key!r}")
                if not isinstance(rule, (str, dict)):
                    raise PipelineError(f"unsupported projection for {key!r}: {rule!r}")
                _validate_expression(rule, "$project")
    elif name == "$unwind":
        unwind_path(stage)
    elif name == "$sort":
        if not isinstance(body, dict) or not body:
            raise PipelineError("$sort needs a non-empty object")
        for path, direction in body.items():
            _path_operand("$" + path, "$sort path")
            if direction not in (1, -1):
                raise PipelineError("$sort directions must be 1 or -1")
    elif name == "$limit":
        if isinstance(body, bool) or not isinstance(body, int) or body < 0:
            raise PipelineError("$limit needs a non-negative integer")
    elif name == "$group":
        if not isinstance(body, dict) or "_id" not in body:
            raise PipelineError("$group needs an _id specification")
        group_id = body["_id"]
        if isinstance(group_id, dict) and not (len(group_id) == 1 and next(iter(group_id)) in CONVERSIONS):
            for sub in group_id.values():
                _validate_expression(sub, "$group _id")
        else:
            _validate_expression(group_id, "$group _id")
        for output, accumulator in body.items():
            if output == "_id":
                continue
            if not isinstance(accumulator, dict) or len(accumulator) != 1:
                raise PipelineError(f"accumulator for {output!r} must have one operator")
            op, operand = next(iter(accumulator.items()))
            if op not in ACCUMULATORS:
                raise PipelineError(f"unsupported accumulator {op!r}")
            if op != "$count":
                _validate_expression(operand, op)


# evaluation


def evaluate_operand(doc: Dict[str, Any], operand: Any) -> Value:
    if isinstance(operand, str) and operand.startswith("$"):
        return get_path(doc, operand[1:])
    if isinstance(operand, dict) and len(operand) == 1:
        op, inner = next(iter(operand.items()))
        if op in CONVERSIONS:
            return coerce(evaluate_operand(doc, inner), CONVERSIONS[op])
    return operand


def _condition_holds(value: Value, condition: Any) -> bool:
    if value is None:
        return False
    if isinstance(condition, dict) and condition and all(k.startswith("$") for k in condition):
        return all(_operator_holds(value, op, literal) for op, literal in condition.items())
    return _operator_holds(value, "$eq", condition)


def _operator_holds(value: Value, op: str, literal: Any) -> bool:
    if op == "$in":
        return any(compare(value, item) == 0 for item in literal)
    result = compare(value, literal)
    if result is None:
        return False
    if op == "$eq":
        return result == 0
    if op == "$ne":
        return result != 0
    if op == "$gt":
        return result > 0
    if op == "$gte":
        return result >= 0
    if op == "$lt":
        return result < 0
    if op == "$lte":
        return result <= 0
    raise PipelineError(f"unsupported match operator {op!r}")


def expression_holds(doc: Dict[str, Any], expr: Dict[str, Any]) -> bool:
    """Evaluate an $expr condition; the left operand is an expression, the right a literal."""
    op, args = next(iter(expr.items()))
    if op == "$and":
        return all(expression_holds(doc, term) for term in args)
    value = evaluate_operand(doc, args[0])
    if value is None:
        return False
    return _operator_holds(value, op, args[1])


def matches(doc: Dict[str, Any], predicate: Dict[str, Any]) -> bool:
    return all(
        expression_holds(doc, cond) if path == "$expr" else _condition_holds(get_path(doc, path), cond)
        for path, cond in predicate.items()
    )


def _include(source: Any, target: Dict[str, Any], segments: Tuple[str, ...]) -> None:
    head, rest = segments[0], segments[1:]
    if not isinstance(source, dict) or head not in source:
        return
    value = source[head]
    if not rest:
        target[head] = value
        return
    if isinstance(value, dict):
        existing = target.get(head)
        child = dict(existing) if isinstance(existing, dict) else {}
        _include(value, child, rest)
        target[head] = child
    elif isinstance(value, list):
        existing = target.get(head)
        projected = []
        for i, element in enumerate(value):
            if not isinstance(element, dict):
                continue
            previous = existing[i] if isinstance(existing, list) and i < len(existing) else None
            child = dict(previous) if isinstance(previous, dict) else {}
            _include(element, child, rest)
            projected.append(child)
        target[head] = projected


def project(doc: Dict[str, Any], spec: Dict[str, Any]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    id_rule = spec.get("_id", 1)
    keep_id = not (id_rule in (0, False) and not isinstance(id_rule, str))
    if keep_id and "_id" in doc and (id_rule in (1, True) and not isinstance(id_rule, str)):
        out["_id"] = doc["_id"]
    for key, rule in spec.items():
        if key == "_id" and not isinstance(rule, (str, dict)):
            continue
        if not isinstance(rule, (str, dict)) and rule in (1, True):
            _include(doc, out, split_path(key))
            continue
        value = evaluate_operand(doc, rule)
        if value is not None:
            out[key] = value
    return out


def unwind(docs: Iterable[Dict[str, Any]], path: str) -> Iterator[Dict[str, Any]]:
    for doc in docs:
        value = get_path(doc, path)
        if value is None:
            continue
        if isinstance(value, list):
            for element in value:
                yield set_path(doc, path, element)
        else:
            yield doc


def sort_documents(docs: Iterable[Dict[str, Any]], spec: Dict[str, int]) -> List[Dict[str, Any]]:
    ordered = list(docs)
    for path, direction in reversed(list(spec.items())):
        ordered.sort(key=lambda d, p=path: sort_key(get_path(d, p)), reverse=direction == -1)
    return ordered


class _Accumulator:
    def __init__(self, op: str, operand: Any):
        self.op = op
        self.operand = operand
        self.total: Any = 0
        self.count = 0
        self.best: Value = None

    def add(self, doc: Dict[str, Any]) -> None:
        if self.op == "$count":
            self.count += 1
            return
        value = evaluate_operand(doc, self.operand)
        if self.op in ("$sum", "$avg"):
            if is_number(value):
                self.total += value
                self.count += 1
        elif value is not None:
            if self.best is None:
                self.best = value
            elif self.op == "$min" and sort_key(value) < sort_key(self.best):
                self.best = value
            elif self.op == "$max" and sort_key(value) > sort_key(self.best):
                self.best = value

    def result(self) -> Value:
        if self.op == "$count":
            return self.count
        if self.op == "$sum":
            return self.total
        if self.op == "$avg":
            return self.total / self.count if self.count else None
        return self.best


def _group_id(doc: Dict[str, Any], spec: Any) -> Value:
    if isinstance(spec, dict) and not (len(spec) == 1 and next(iter(spec)) in CONVERSIONS):
        return {name: evaluate_operand(doc, operand) for name, operand in spec.items()}
    return evaluate_operand(doc, spec)


def group(docs: Iterable[Dict[str, Any]], spec: Dict[str, Any]) -> Iterator[Dict[str, Any]]:
    groups: Dict[Any, Tuple[Value, List[Tuple[str, _Accumulator]]]] = {}
    outputs = [(name, acc) for name, acc in spec.items() if name != "_id"]
    for doc in docs:
        group_value = _group_id(doc, spec["_id"])
        key = join_key(group_value)
        if key not in groups:
            accumulators = [
                (name, _Accumulator(*next(iter(acc.items())))) for name, acc in outputs
            ]
            groups[key] = (group_value, accumulators)
        for _, accumulator in groups[key][1]:
            accumulator.add(doc)
    for group_value, accumulators in groups.values():
        result: Dict[str, Any] = {"_id": group_value}
        for name, accumulator in accumulators:
            result[name] = accumulator.result()
        yield result


def _apply(docs: Iterable[Dict[str, Any]], stage: Stage) -> Iterable[Dict[str, Any]]:
    name = stage_name(stage)
    body = stage[name]
    if name == "$match":
        return (doc for doc in docs if matches(doc, body))
    if name == "$project":
        return (project(doc, body) for doc in docs)
    if name == "$unwind":
        return unwind(docs, unwind_path(stage))
    if name == "$sort":
        return sort_documents(docs, body)
    if name == "$limit":
        return _limit(docs, body)
    if name == "$group":
        return group(docs, body)
    raise PipelineError(f"unknown stage {name!r}")


def _limit(docs: Iterable[Dict[str, Any]], count: int) -> Iterator[Dict[str, Any]]:
    if count <= 0:
        return
    for i, doc in enumerate(docs, start=1):
        yield doc
        if i >= count:
            return


def execute(docs: Iterable[Dict[str, Any]], stages: Iterable[Stage]) -> Iterator[Dict[str, Any]]:
    """Run stages over a document stream, lazily where the stage allows it."""
    stream: Iterable[Dict[str, Any]] = docs
    for stage in stages:
        validate_stage(stage)
        stream = _apply(stream, stage)
    yield from stream


# rewrites


def _is_inclusion(spec: Dict[str, Any]) -> bool:
    for key, rule in spec.items():
        if isinstance(rule, (str, dict)):
            return False
        if key != "_id" and rule not in (1, True):
            return False
    return True


def _excludes_id(spec: Dict[str, Any]) -> bool:
    rule = spec.get("_id", 1)
    return not isinstance(rule, (str, dict)) and rule in (0, False)


def _covered(path: str, included: Iterable[str]) -> bool:
    return any(path == p or path.startswith(p + ".") for p in included)


def _merge_projects(first: Dict[str, Any], second: Dict[str, Any]) -> Optional[Dict[str, Any]]:
    if not (_is_inclusion(first) and _is_inclusion(second)):
        return None
    kept = [k for k in first if k != "_id"]
    wanted = [k for k in second if k != "_id"]
    if not all(_covered(path, kept) for path in wanted):
        return None
    merged = dict(second)
    if _excludes_id(first):
        merged["_id"] = 0
    return merged


def simplify(stages: Iterable[Stage]) -> List[Stage]:
    """Merge adjacent matches and inclusion projects; drop repeated projects."""
    result: List[Stage] = []
    for stage in stages:
        name = stage_name(stage)
        if result:
            previous = result[-1]
            previous_name = stage_name(previous)
            if name == previous_name == "$match":
                first, second = previous["$match"], stage["$match"]
                if not set(first) & set(second):
                    result[-1] = {"$match": {**first, **second}}
                    continue
            if name == previous_name == "$project":
                if stage == previous:
                    continue
                merged = _merge_projects(previous["$project"], stage["$project"])
                if merged is not None:
                    result[-1] = {"$project": merged}
                    continue
        result.append(stage)
    return result


def leading_unwinds(stages: Iterable[Stage]) -> Optional[List[str]]:
    """Unwind paths when the fragment consists of $unwind stages only."""
    paths = []
    for stage in stages:
        if stage_name(stage) != "$unwind":
            return None
        paths.append(unwind_path(stage))
    return paths


def traverses(path: str, array_paths: Iterable[str]) -> bool:
    """True when path lies inside (or is) one of the unwound array paths."""
    return _covered(path, array_paths)


def render_pipeline(stages: Iterable[Stage]) -> str:
    return json.dumps([to_json(stage) for stage in stages], ensure_ascii=False)

