"""Executor tests: operator protocol and end-to-end query semantics."""

import pytest

from polyglot_qe.errors import ExecutionError, PlanningError
from polyglot_qe.executor import Distinct, Limit, MatViewScan, Sort, Unnest, run
from polyglot_qe.expressions import BoundExpr, Field, Scope
from polyglot_qe.relmodel import ScalarType
from polyglot_qe.sql_parser import parse_query

PEOPLE = [
    {"_id": 1, "name": "ana", "age": 30},
    {"_id": 2, "name": "rui"},
    {"_id": 3, "name": "eva", "age": 20},
]


def source(rows, name="a", type_=ScalarType.INT):
    return MatViewScan("test.rows", lambda: rows, Scope([Field(name, type_)]), float(len(rows)))


def column(position=0):
    return BoundExpr(lambda row: row[position], ScalarType.INT, "a")


@pytest.fixture
def people(engine):
    engine.add_server("mongo", "docstore")
    engine.store_for("mongo").write_collection("people", PEOPLE)
    engine.import_schema("mongo", "app", apply=True)
    return engine


class TestOperators:
    def test_next_after_exhaustion_keeps_returning_none(self):
        root = source([(1,), (2,)])
        cursor = run(root, ["a"])
        assert cursor.next() == (1,)
        assert cursor.next() == (2,)
        assert cursor.next() is None
        assert cursor.next() is None
        cursor.close()
        cursor.close()

    def test_limit(self):
        assert run(Limit(source([(1,), (2,), (3,)]), 2), ["a"]).fetchall().rows == [(1,), (2,)]
        assert run(Limit(source([(1,)]), 0), ["a"]).fetchall().rows == []

    def test_distinct_keeps_first_occurrences(self):
        rows = run(Distinct(source([(2,), (1,), (2,), (None,), (None,)])), ["a"]).fetchall().rows
        assert rows == [(2,), (1,), (None,)]

    def test_sort_puts_nulls_first_ascending_and_last_descending(self):
        data = [(3,), (None,), (1,)]
        assert run(Sort(source(data), [(column(), False)]), ["a"]).fetchall().rows == [(None,), (1,), (3,)]
        assert run(Sort(source(data), [(column(), True)]), ["a"]).fetchall().rows == [(3,), (1,), (None,)]

    def test_unnest_arrays(self):
        root = Unnest(source([([1, 2],), (None,), ([],), ([3],)], type_=None), 0)
        assert run(root, ["a"]).fetchall().rows == [(1,), (2,), (3,)]

    def test_unnest_rejects_scalars(self):
        root = Unnest(source([(5,)]), 0)
        with pytest.raises(ExecutionError) as excinfo:
            run(root, ["a"]).fetchall()
        assert excinfo.value.context["operator"] == "Unnest"

    def test_unnest_by_document_path(self):
        docs = [({"_id": 1, "xs": [{"v": 1}, {"v": 2}]},), ({"_id": 2},)]
        root = Unnest(source(docs, type_=None), 0, "xs")
        rows = run(root, ["doc"]).fetchall().rows
        assert [row[0]["xs"] for row in rows] == [{"v": 1}, {"v": 2}]

    def test_explain_of_operator_tree(self):
        root = Limit(Sort(source([(1,)]), [(column(), True)]), 5)
        assert root.explain() == "Limit 5\n  Sort [a DESC]\n    MatViewScan test.rows (rows=1)"


class TestQueries:
    def test_select_without_from(self, engine):
        result = engine.query("SELECT 1")
        assert result.columns == ["?column?"]
        assert result.rows == [(1,)]

    def test_integer_division_truncates(self, engine):
        assert engine.query("SELECT 7 / 2, -7 / 2, 7.0 / 2").rows == [(3, -3, 3.5)]

    def test_division_by_zero(self, engine):
        with pytest.raises(ExecutionError):
            engine.query("SELECT 1 / 0")

    def test_nulls_propagate_through_arithmetic(self, people):
        assert people.query("SELECT age + 1 FROM app.people ORDER BY _id").rows == [(31,), (None,), (21,)]

    def test_comparisons_with_null_filter_out(self, people):
        assert people.query("SELECT _id FROM app.people WHERE age > 25").rows == [(1,)]
        assert people.query("SELECT _id FROM app.people WHERE NOT (age > 25)").rows == [(3,)]
        assert people.query("SELECT _id FROM app.people WHERE age IS NULL").rows == [(2,)]
        assert people.query("SELECT _id FROM app.people WHERE age IN (30, NULL)").rows == [(1,)]

    def test_order_by_places_nulls(self, people):
        assert people.query("SELECT _id FROM app.people ORDER BY age").rows == [(2,), (3,), (1,)]
        assert people.query("SELECT _id FROM app.people ORDER BY age DESC").rows == [(1,), (3,), (2,)]

    def test_order_by_hidden_column(self, people):
        result = people.query("SELECT name FROM app.people ORDER BY _id DESC")
        assert result.columns == ["name"]
        assert result.rows == [("eva",), ("rui",), ("ana",)]

    def test_star_expansion(self, people):
        result = people.query("SELECT * FROM app.people ORDER BY _id")
        assert set(result.columns) == {"_id", "name", "age"}
        assert len(result.rows) == 3

    def test_limit_zero(self, people):
        assert people.query("SELECT _id FROM app.people LIMIT 0").rows == []

    def test_aggregates_over_empty_input(self, widget_engine):
        result = widget_engine.query("SELECT COUNT(*), SUM(qty), MAX(qty) FROM ymdb.stores_sells WHERE qty > 100")
        assert result.rows == [(0, None, None)]

    def test_average_and_distinct_count(self, widget_engine):
        result = widget_engine.query("SELECT AVG(qty), COUNT(DISTINCT widget_color) FROM ymdb.stores_sells")
        assert result.rows == [(3.75, 2)]

    def test_group_having_order(self, widget_engine):
        sql = (
            "SELECT _parent_id, SUM(qty) AS total FROM ymdb.stores_sells "
            "GROUP BY _parent_id HAVING SUM(qty) > 2 ORDER BY total DESC, _parent_id"
        )
        result = widget_engine.query(sql)
        assert result.columns == ["_parent_id", "total"]
        assert result.rows == [("store::1", 7), ("store::2", 7)]

    def test_distinct(self, widget_engine):
        rows = widget_engine.query("SELECT DISTINCT location FROM ymdb.stores ORDER BY location").rows
        assert rows == [("Braga",), ("Lisboa",)]

    def test_distinct_order_by_must_be_selected(self, widget_engine):
        with pytest.raises(PlanningError):
            widget_engine.query("SELECT DISTINCT location FROM ymdb.stores ORDER BY _id")

    def test_cursor_streams_rows(self, widget_engine):
        cursor = widget_engine.cursor(parse_query("SELECT _id FROM ymdb.stores"))
        assert cursor.next() == ("store::1",)
        cursor.close()
        assert cursor.next() is None

    def test_stats_count_emitted_rows(self, widget_engine):
        result = widget_engine.query("SELECT _id FROM ymdb.stores")
        assert result.stats == {"point_gets": 0, "scans": 1, "rows_emitted": 3}
        assert result.elapsed >= 0.0
