"""Tests for the document pipeline language and its evaluator."""

import json

import numpy as np
import pytest

from conftest import WIDGET_STORES
from polyglot_qe.errors import PipelineError
from polyglot_qe.pipeline import (
    execute,
    leading_unwinds,
    parse_pipe,
    project,
    render_pipeline,
    simplify,
    traverses,
    validate_stage,
)
from polyglot_qe.relmodel import Timestamp


def run(stages, docs=WIDGET_STORES):
    return list(execute(docs, stages))


class TestParse:
    def test_array_form(self):
        fragment = parse_pipe('[{"$unwind": "$ORDERS"}]')
        assert fragment.stages == ({"$unwind": "$ORDERS"},)
        assert fragment.envelope == {}

    def test_envelope_form(self):
        fragment = parse_pipe('{"pipeline": [{"$limit": 3}], "allowDiskUse": true}')
        assert fragment.stages == ({"$limit": 3},)
        assert fragment.envelope == {"allowDiskUse": True}

    def test_dates_are_decoded(self):
        fragment = parse_pipe('[{"$match": {"when": {"$gte": {"$date": "2024-01-01 00:00:00"}}}}]')
        assert fragment.stages[0]["$match"]["when"]["$gte"] == Timestamp.parse("2024-01-01 00:00:00")

    @pytest.mark.parametrize(
        "text",
        [
            "not json",
            '{"stages": []}',
            '{"pipeline": [], "hint": 1}',
            '[{"$lookup": {}}]',
            '[{"$unwind": "ORDERS"}]',
            '[{"$match": {"a": {"$regex": "x"}}}]',
            '[{"$limit": -1}]',
            '[{"$sort": {"a": 2}}]',
            '[{"$project": {"a": 0}}]',
            '[{"$group": {"n": {"$sum": 1}}}]',
            '[{"$match": {}, "$limit": 1}]',
            '[{"$match": {"$expr": {"$eq": ["$a"]}}}]',
            '[{"$match": {"$expr": {"$regex": ["$a", "x"]}}}]',
            '[{"$match": {"$expr": {"$in": [{"$toLong": "$a"}, 1]}}}]',
            '[{"$match": {"$expr": {"$and": []}}}]',
        ],
    )
    def test_rejected(self, text):
        with pytest.raises(PipelineError):
            parse_pipe(text)

    def test_invalid_json_reports_offset(self):
        with pytest.raises(PipelineError) as excinfo:
            parse_pipe('[{"$limit": }]')
        assert "offset" in excinfo.value.context


class TestExecute:
    def test_match_operators(self):
        assert [d["_id"] for d in run([{"$match": {"location": "Braga"}}])] == ["store::1", "store::3"]
        assert [d["_id"] for d in run([{"$match": {"location": {"$ne": "Braga"}}}])] == ["store::2"]
        assert [d["_id"] for d in run([{"$match": {"_id": {"$in": ["store::2", "store::9"]}}}])] == ["store::2"]

    def test_missing_fields_never_match(self):
        assert run([{"$match": {"nothing": {"$ne": 1}}}]) == []

    def test_expr_compares_converted_values(self):
        docs = [{"_id": 1, "x": 1}, {"_id": 2, "x": 2}, {"_id": 3, "x": "2"}, {"_id": 4}]
        match = {"$match": {"$expr": {"$eq": [{"$toLong": "$x"}, 2]}}}
        assert [d["_id"] for d in run([match], docs)] == [2, 3]
        match = {"$match": {"$expr": {"$ne": [{"$toLong": "$x"}, 2]}}}
        assert [d["_id"] for d in run([match], docs)] == [1]

    def test_expr_conjunction_and_in(self):
        docs = [{"_id": 1, "amt": "5"}, {"_id": 2, "amt": "7"}, {"_id": 3, "amt": 7.5}]
        terms = [
            {"$in": [{"$toDouble": "$amt"}, [5.0, 7.5]]},
            {"$gt": [{"$toDouble": "$amt"}, 6]},
        ]
        assert [d["_id"] for d in run([{"$match": {"$expr": {"$and": terms}}}], docs)] == [3]

    def test_expr_literal_is_not_a_path(self):
        docs = [{"_id": 1, "a": "$a"}, {"_id": 2, "a": "b"}]
        match = {"$match": {"$expr": {"$eq": [{"$toString": "$a"}, "$a"]}}}
        assert [d["_id"] for d in run([match], docs)] == [1]

    def test_unwind_then_match(self):
        docs = run([{"$unwind": "$sells"}, {"$match": {"sells.widget.color": "red"}}])
        assert [(d["_id"], d["sells"]["qty"]) for d in docs] == [("store::1", 5), ("store::2", 7)]

    def test_unwind_skips_missing_and_empty_arrays(self):
        docs = [{"_id": 1, "a": []}, {"_id": 2}, {"_id": 3, "a": [1, 2]}, {"_id": 4, "a": 9}]
        assert [(d["_id"], d["a"]) for d in run([{"$unwind": "$a"}], docs)] == [(3, 1), (3, 2), (4, 9)]

    def test_projection_through_arrays(self):
        doc = WIDGET_STORES[0]
        assert project(doc, {"sells.qty": 1}) == {"_id": "store::1", "sells": [{"qty": 5}, {"qty": 2}]}
        assert project(doc, {"_id": 0, "location": 1}) == {"location": "Braga"}

    def test_computed_projection_with_conversion(self):
        docs = [{"_id": 1, "n": "42"}]
        assert run([{"$project": {"_id": 0, "v": {"$toLong": "$n"}}}], docs) == [{"v": 42}]

    def test_sort_and_limit(self):
        docs = run([{"$unwind": "$sells"}, {"$sort": {"sells.qty": -1}}, {"$limit": 2}])
        assert [d["sells"]["qty"] for d in docs] == [7, 5]

    def test_sort_is_stable_across_keys(self):
        docs = run([{"$sort": {"location": 1, "_id": -1}}])
        assert [d["_id"] for d in docs] == ["store::3", "store::1", "store::2"]

    def test_group(self):
        stages = [
            {"$unwind": "$sells"},
            {
                "$group": {
                    "_id": "$location",
                    "qty": {"$sum": "$sells.qty"},
                    "avg": {"$avg": "$sells.qty"},
                    "top": {"$max": "$sells.widget.id"},
                    "n": {"$count": {}},
                }
            },
        ]
        groups = {g["_id"]: g for g in run(stages)}
        assert groups["Braga"] == {"_id": "Braga", "qty": 8, "avg": 8 / 3, "top": "Widget2", "n": 3}
        assert groups["Lisboa"]["n"] == 1

    def test_group_by_compound_key(self):
        stages = [{"$unwind": "$sells"}, {"$group": {"_id": {"loc": "$location", "color": "$sells.widget.color"}}}]
        keys = [g["_id"] for g in run(stages)]
        assert {"loc": "Braga", "color": "blue"} in keys
        assert len(keys) == 3

    def test_limit_zero(self):
        assert run([{"$limit": 0}]) == []


class TestRewrites:
    def test_adjacent_matches_merge(self):
        stages = simplify([{"$match": {"a": 1}}, {"$match": {"b": 2}}])
        assert stages == [{"$match": {"a": 1, "b": 2}}]

    def test_matches_on_the_same_path_stay_apart(self):
        stages = [{"$match": {"a": {"$gt": 1}}}, {"$match": {"a": {"$lt": 5}}}]
        assert simplify(stages) == stages

    def test_inclusion_projects_merge(self):
        stages = simplify([{"$project": {"a": 1, "b": 1}}, {"$project": {"a": 1}}])
        assert stages == [{"$project": {"a": 1}}]

    def test_projects_that_widen_do_not_merge(self):
        stages = [{"$project": {"a": 1}}, {"$project": {"b": 1}}]
        assert simplify(stages) == stages

    def test_leading_unwinds(self):
        assert leading_unwinds(({"$unwind": "$a"}, {"$unwind": {"path": "$a.b"}})) == ["a", "a.b"]
        assert leading_unwinds(({"$unwind": "$a"}, {"$limit": 1})) is None

    def test_traverses(self):
        assert traverses("sells.qty", ["sells"])
        assert traverses("sells", ["sells"])
        assert not traverses("sellsx", ["sells"])
        assert not traverses("_id", ["sells"])

    def test_render_pipeline(self):
        assert render_pipeline([{"$unwind": "$sells"}]) == '[{"$unwind": "$sells"}]'

    def test_validate_stage_rejects_unknown_operator(self):
        with pytest.raises(PipelineError):
            validate_stage({"$out": "x"})


def test_match_before_unwind_is_equivalent_on_non_array_paths():
    rng = np.random.default_rng(31)

    def canonical(docs):
        return sorted(json.dumps(d, sort_keys=True) for d in docs)

    for _ in range(50):
        docs = []
        for i in range(int(rng.integers(0, 12))):
            doc = {"_id": i, "meta": {"k": int(rng.integers(0, 5))}}
            if rng.random() < 0.8:
                doc["arr"] = [{"v": int(v)} for v in rng.integers(0, 5, size=int(rng.integers(0, 4)))]
            docs.append(doc)
        match = {"$match": {"meta.k": {"$gte": int(rng.integers(0, 5))}}}
        unwind = {"$unwind": "$arr"}
        assert canonical(run([match, unwind], docs)) == canonical(run([unwind, match], docs))
