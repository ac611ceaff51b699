"""Document store emulator and wrapper push-down."""

import json

import pytest

from polyglot_qe.docstore import RAW_DOCUMENT_COLUMN, DocStore
from polyglot_qe.errors import CursorError, StoreError, StoreUnavailableError
from polyglot_qe.wrapper import AggregateRequest, AggregateSpec, Predicate, ScanRequest, SortKey, WrapperStats


def native_stages(plan):
    return plan.native["stages"]


def stage_names(plan):
    return [next(iter(stage)) for stage in native_stages(plan)]


def scan(engine, table_name, columns, filters=(), **kwargs):
    table = engine.catalog.resolve(table_name)
    wrapper = engine.wrapper_for_table(table)
    return wrapper, wrapper.plan_scan(ScanRequest(table, columns, tuple(filters), **kwargs))


def fetch(wrapper, plan, stats=None):
    cursor = wrapper.open(plan, stats)
    rows = list(cursor)
    cursor.close()
    return rows


def disable_pushdown(engine):
    engine.settings = engine.settings.with_overrides({"planner.pushdown_enabled": False}, source="test")


class TestDocStore:
    def test_write_and_read(self, tmp_path):
        store = DocStore(str(tmp_path))
        store.write_collection("c", [{"_id": 1, "a": [1, 2]}, {"_id": 2, "a": {"b": "x"}}])
        assert store.names() == ["c"]
        assert store.collection("c") == ({"_id": 1, "a": [1, 2]}, {"_id": 2, "a": {"b": "x"}})

    def test_missing_ids_are_assigned(self, tmp_path):
        store = DocStore(str(tmp_path))
        store.write_collection("c", [{"a": 1}, {"_id": "oid:1", "a": 2}])
        assert [doc["_id"] for doc in store.collection("c")] == ["oid:2", "oid:1"]

    def test_duplicate_ids_are_rejected(self, tmp_path):
        (tmp_path / "c.jsonl").write_text('{"_id": 1}\n{"_id": 1}\n', encoding="utf-8")
        with pytest.raises(StoreError):
            DocStore(str(tmp_path)).collection("c")

    def test_missing_collection_is_unavailable(self, tmp_path):
        with pytest.raises(StoreUnavailableError):
            DocStore(str(tmp_path)).collection("nothing")

    def test_changes_on_disk_are_picked_up(self, tmp_path):
        store = DocStore(str(tmp_path))
        store.write_collection("c", [{"_id": 1}])
        store.insert("c", [{"_id": 2}])
        assert store.count("c") == 2


class TestPlanScan:
    def test_parent_id_filter_is_hoisted_before_unwind(self, widget_engine):
        wrapper, plan = scan(
            widget_engine,
            "ymdb.stores_sells",
            ("_parent_id", "qty"),
            [Predicate("_parent_id", "=", "store::1"), Predicate("qty", ">", 1)],
        )
        assert plan.residual == ()
        assert stage_names(plan) == ["$match", "$project", "$unwind", "$match", "$project"]
        assert native_stages(plan)[0] == {"$match": {"$expr": {"$eq": [{"$toString": "$_id"}, "store::1"]}}}
        assert native_stages(plan)[3] == {"$match": {"$expr": {"$gt": [{"$toLong": "$sells.qty"}, 1]}}}
        assert plan.native_text.startswith("db.stores.aggregate([")
        assert plan.native_text.index('"$match"') < plan.native_text.index('"$unwind"')
        assert fetch(wrapper, plan) == [("store::1", 5), ("store::1", 2)]

    def test_sort_and_limit_push_down(self, widget_engine):
        wrapper, plan = scan(
            widget_engine, "ymdb.stores_sells", ("_parent_id", "qty"), sort=(SortKey("qty", True),), limit=1
        )
        assert plan.sort_accepted and plan.limit_accepted
        assert {"$project": {"_id": 1, "sells.qty": 1, "__sort0": {"$toLong": "$sells.qty"}}} in native_stages(plan)
        assert {"$sort": {"__sort0": -1}} in native_stages(plan)
        assert fetch(wrapper, plan) == [("store::2", 7)]

    def test_residual_blocks_limit(self, widget_engine):
        table = widget_engine.catalog.resolve("ymdb.stores")
        wrapper = widget_engine.wrapper_for_table(table).with_pushdown(False)
        plan = wrapper.plan_scan(ScanRequest(table, ("_id",), (Predicate("location", "=", "Braga"),), limit=1))
        assert plan.raw_documents
        assert not plan.limit_accepted
        assert plan.residual == (Predicate("location", "=", "Braga"),)
        assert plan.output_columns[0].name == RAW_DOCUMENT_COLUMN
        rows = fetch(wrapper, plan)
        assert [row[0]["_id"] for row in rows] == ["store::1", "store::2", "store::3"]

    def test_group_push_down(self, widget_engine):
        aggregate = AggregateRequest(("location",), (AggregateSpec("COUNT"),))
        wrapper, plan = scan(widget_engine, "ymdb.stores", ("location",), aggregate=aggregate)
        assert plan.aggregate_accepted
        assert native_stages(plan)[-1] == {
            "$group": {"_id": {"g0": {"$toString": "$location"}}, "a0": {"$count": {}}}
        }
        assert sorted(fetch(wrapper, plan)) == [("Braga", 2), ("Lisboa", 1)]

    def test_distinct_count_is_not_pushed(self, widget_engine):
        aggregate = AggregateRequest(("location",), (AggregateSpec("COUNT", "_id", True),))
        _, plan = scan(widget_engine, "ymdb.stores", ("location", "_id"), aggregate=aggregate)
        assert not plan.aggregate_accepted
        assert "$group" not in stage_names(plan)

    def test_scan_counts(self, widget_engine):
        wrapper, plan = scan(widget_engine, "ymdb.stores", ("_id",))
        stats = WrapperStats()
        assert len(fetch(wrapper, plan, stats)) == 3
        assert stats.snapshot() == {"point_gets": 0, "scans": 1, "rows_emitted": 3}


class TestTextEncoding:
    @pytest.fixture
    def prices(self, engine):
        engine.add_server("mongo", "docstore")
        engine.store_for("mongo").write_collection(
            "prices",
            [
                {"_id": "p1", "amount": "10", "price": "5"},
                {"_id": "p2", "amount": "9", "price": "7.25"},
                {"_id": "p3", "amount": "010", "price": "5.0"},
            ],
        )
        engine.execute(
            "CREATE FOREIGN TABLE ymdb.prices (_id TEXT, amount INTEGER, price DOUBLE PRECISION) SERVER mongo "
            "OPTIONS (collection 'prices', encoding 'text')"
        )
        return engine

    def test_equality_compares_converted_text(self, prices):
        wrapper, plan = scan(prices, "ymdb.prices", ("_id", "amount"), [Predicate("amount", "=", 10)])
        assert native_stages(plan)[0] == {"$match": {"$expr": {"$eq": [{"$toLong": "$amount"}, 10]}}}
        assert fetch(wrapper, plan) == [("p1", 10), ("p3", 10)]

    def test_double_literal_matches_integral_text(self, prices):
        sql = "SELECT _id FROM ymdb.prices WHERE price = 5 ORDER BY _id"
        assert '"5.0"' not in prices.explain(sql)
        assert prices.query(sql).rows == [("p1",), ("p3",)]
        disable_pushdown(prices)
        assert prices.query(sql).rows == [("p1",), ("p3",)]

    def test_ranges_are_pushed(self, prices):
        wrapper, plan = scan(prices, "ymdb.prices", ("_id",), [Predicate("price", ">", 6.0)])
        assert plan.residual == ()
        assert fetch(wrapper, plan) == [("p2",)]

    def test_sort_on_non_text_column_uses_converted_values(self, prices):
        wrapper, plan = scan(prices, "ymdb.prices", ("_id", "amount"), sort=(SortKey("amount"),))
        assert plan.sort_accepted
        assert {"$sort": {"__sort0": 1}} in native_stages(plan)
        assert fetch(wrapper, plan) == [("p2", 9), ("p1", 10), ("p3", 10)]

    def test_bad_cell_names_the_row(self, prices):
        prices.store_for("mongo").insert("prices", [{"_id": "p4", "amount": "abc"}])
        wrapper, plan = scan(prices, "ymdb.prices", ("_id", "amount"))
        with pytest.raises(CursorError) as excinfo:
            fetch(wrapper, plan)
        assert excinfo.value.context["row_key"] == "p4"
        assert excinfo.value.context["column"] == "amount"

    def test_bad_cell_in_a_pushed_filter_fails_the_scan(self, prices):
        prices.store_for("mongo").insert("prices", [{"_id": "p4", "amount": "abc"}])
        wrapper, plan = scan(prices, "ymdb.prices", ("_id",), [Predicate("amount", "=", 10)])
        with pytest.raises(CursorError):
            fetch(wrapper, plan)


class TestMixedTypes:
    @pytest.fixture
    def mixed(self, engine):
        engine.add_server("mongo", "docstore")
        engine.store_for("mongo").write_collection(
            "t",
            [{"_id": 1, "x": 1}, {"_id": 2, "x": 2}, {"_id": 3, "x": "2"}, {"_id": 4, "x": "10"}, {"_id": 5, "x": 7}],
        )
        engine.import_schema("mongo", "ymdb", apply=True)
        return engine

    def test_majority_type_is_integer(self, mixed):
        assert mixed.catalog.resolve("ymdb.t").schema.column("x").type.is_integer

    @pytest.mark.parametrize(
        "where, expected",
        [
            ("x = 2", [(2, 2), (3, 2)]),
            ("x <> 2", [(1, 1), (4, 10), (5, 7)]),
            ("x >= 2", [(2, 2), (3, 2), (4, 10), (5, 7)]),
            ("x IN (1, 10)", [(1, 1), (4, 10)]),
        ],
    )
    def test_filters_see_converted_values(self, mixed, where, expected):
        sql = f"SELECT _id, x FROM ymdb.t WHERE {where} ORDER BY _id"
        assert "$toLong" in mixed.explain(sql)
        assert mixed.query(sql).rows == expected
        disable_pushdown(mixed)
        assert mixed.query(sql).rows == expected

    def test_sort_and_limit_see_converted_values(self, mixed):
        sql = "SELECT _id, x FROM ymdb.t ORDER BY x DESC LIMIT 2"
        explain = mixed.explain(sql)
        assert "Sort" not in explain
        assert mixed.query(sql).rows == [(4, 10), (5, 7)]
        disable_pushdown(mixed)
        assert mixed.query(sql).rows == [(4, 10), (5, 7)]

    def test_group_keys_are_converted(self, mixed):
        sql = "SELECT x, COUNT(*) FROM ymdb.t GROUP BY x ORDER BY x"
        assert '"$group"' in mixed.explain(sql)
        assert mixed.query(sql).rows == [(1, 1), (2, 2), (7, 1), (10, 1)]


class TestImport:
    def test_ddl_for_widget_stores(self, engine):
        engine.add_server("mongo", "docstore")
        engine.store_for("mongo").write_collection("stores", [{"_id": "s", "location": "x", "sells": [{"qty": 1}]}])
        outcome = engine.import_schema("mongo", "ymdb")
        ddl = outcome.ddl()
        assert len(ddl) == 2
        assert ddl[1].startswith("CREATE FOREIGN TABLE ymdb.stores_sells (_parent_id TEXT OPTIONS (mname '_id')")
        assert "pipe '" + json.dumps([{"$unwind": "$sells"}]) + "'" in ddl[1]
        assert outcome.applied == []

    def test_broken_collection_is_reported(self, engine):
        engine.add_server("mongo", "docstore")
        store = engine.store_for("mongo")
        store.write_collection("good", [{"_id": 1}])
        (store.data_dir / "bad.jsonl").write_text("{not json\n", encoding="utf-8")
        outcome = engine.import_schema("mongo", "ymdb", apply=True)
        assert [f.source for f in outcome.result.failures] == ["bad"]
        assert len(outcome.applied) == 1
