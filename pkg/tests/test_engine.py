"""Engine facade: file loading, statement execution and wrapper lifecycle."""

import json
from pathlib import Path

import pytest

from conftest import WIDGET_STORES
from polyglot_qe.errors import CatalogError, DuplicateObjectError, PolyglotError, StoreError, UnknownObjectError


class TestLoadFile:
    def test_json_array(self, engine, tmp_path):
        engine.add_server("mongo", "docstore")
        source = tmp_path / "stores.json"
        source.write_text(json.dumps(WIDGET_STORES), encoding="utf-8")
        assert engine.load_file("mongo", "stores", str(source)) == 3
        assert [d["_id"] for d in engine.store_for("mongo").collection("stores")] == ["store::1", "store::2", "store::3"]

    def test_json_lines_with_dates(self, engine, tmp_path):
        engine.add_server("mongo", "docstore")
        source = tmp_path / "events.jsonl"
        source.write_text(
            '{"_id": 1, "at": {"$date": "2024-03-01 12:00:00"}}\n\n{"_id": 2, "at": null}\n', encoding="utf-8"
        )
        assert engine.load_file("mongo", "events", str(source)) == 2
        engine.import_schema("mongo", apply=True)
        assert engine.query("SELECT _id FROM ymdb.events WHERE at IS NOT NULL").rows == [(1,)]

    def test_invalid_json(self, engine, tmp_path):
        engine.add_server("mongo", "docstore")
        source = tmp_path / "bad.jsonl"
        source.write_text('{"_id": 1}\n{"_id": \n', encoding="utf-8")
        with pytest.raises(StoreError, match="line 2"):
            engine.load_file("mongo", "bad", str(source))

    def test_documents_must_be_objects(self, engine, tmp_path):
        engine.add_server("mongo", "docstore")
        source = tmp_path / "scalars.json"
        source.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(StoreError):
            engine.load_file("mongo", "scalars", str(source))

    def test_widecolumn_csv_needs_a_key_column(self, engine, tmp_path):
        engine.add_server("cass", "widecolumn")
        source = tmp_path / "w.csv"
        source.write_text("w_id,w_name\n1,north\n", encoding="utf-8")
        with pytest.raises(StoreError, match="key"):
            engine.load_file("cass", "warehouse", str(source))

    def test_widecolumn_csv_skips_empty_cells(self, engine, tmp_path):
        engine.add_server("cass", "widecolumn")
        source = tmp_path / "w.csv"
        source.write_text("key,w_name,w_tax\n00001,north,\n00002,south,0.1\n", encoding="utf-8")
        assert engine.load_file("cass", "warehouse", str(source)) == 2
        engine.import_schema("cass", apply=True)
        assert engine.query("SELECT key FROM cass.warehouse WHERE w_tax IS NULL").rows == [("00001",)]

    def test_kv_csv_header(self, engine, tmp_path):
        engine.add_server("redis", "kv")
        source = tmp_path / "kv.csv"
        source.write_text("k,v\na,1\n", encoding="utf-8")
        with pytest.raises(StoreError, match="key,value"):
            engine.load_file("redis", "pairs", str(source))
        source.write_text("key,value\na,1\nb,2\n", encoding="utf-8")
        assert engine.load_file("redis", "pairs", str(source)) == 2
        assert engine.store_for("redis").get("pairs", "b") == "2"

    def test_missing_input_file(self, engine, tmp_path):
        engine.add_server("redis", "kv")
        with pytest.raises(StoreError):
            engine.load_file("redis", "pairs", str(tmp_path / "nothing.csv"))

    def test_unknown_server(self, engine, tmp_path):
        with pytest.raises(UnknownObjectError):
            engine.load_file("nowhere", "pairs", str(tmp_path / "nothing.csv"))


class TestStatements:
    def test_messages(self, engine):
        results = engine.execute(
            "CREATE SERVER redis FOREIGN DATA WRAPPER kv; "
            "CREATE FOREIGN TABLE kv.pairs (key TEXT, value TEXT) SERVER redis OPTIONS (ns 'pairs'); "
            "DROP FOREIGN TABLE kv.pairs; "
            "DROP FOREIGN TABLE IF EXISTS kv.pairs"
        )
        assert [r.message for r in results] == [
            "CREATE SERVER redis (kv, schema kv)",
            "CREATE TABLE kv.pairs (2 columns on redis)",
            "DROP TABLE kv.pairs",
            "SKIP TABLE kv.pairs (does not exist)",
        ]

    def test_select_returns_rows(self, engine):
        (result,) = engine.execute("SELECT 1 + 1 AS two")
        assert result.result.columns == ["two"]
        assert result.result.rows == [(2,)]

    def test_explain_statement(self, widget_engine):
        (result,) = widget_engine.execute("EXPLAIN SELECT _id FROM ymdb.stores LIMIT 1")
        assert result.result is None
        assert "ForeignScan ymdb.stores" in result.message

    def test_execution_stops_at_first_error(self, engine):
        with pytest.raises(DuplicateObjectError):
            engine.execute(
                "CREATE SERVER redis FOREIGN DATA WRAPPER kv; "
                "CREATE SERVER redis FOREIGN DATA WRAPPER kv; "
                "CREATE SERVER other FOREIGN DATA WRAPPER kv"
            )
        assert sorted(engine.catalog.snapshot().servers) == ["redis"]

    def test_import_statement(self, engine):
        engine.execute("CREATE SERVER mongo FOREIGN DATA WRAPPER docstore")
        engine.store_for("mongo").write_collection("stores", WIDGET_STORES)
        (result,) = engine.execute("IMPORT FOREIGN SCHEMA shop FROM SERVER mongo INTO ymdb OPTIONS (sample '2')")
        assert result.message == "IMPORT FOREIGN SCHEMA 2 tables"
        assert engine.query("SELECT COUNT(*) FROM ymdb.stores").rows == [(3,)]

    def test_import_sample_must_be_a_number(self, engine):
        engine.execute("CREATE SERVER mongo FOREIGN DATA WRAPPER docstore")
        with pytest.raises(CatalogError):
            engine.execute("IMPORT FOREIGN SCHEMA shop FROM SERVER mongo INTO ymdb OPTIONS (sample 'many')")

    def test_explain_rejects_other_statements(self, engine):
        with pytest.raises(PolyglotError):
            engine.explain("DROP FOREIGN TABLE IF EXISTS kv.pairs")

    def test_import_sample_limit(self, engine):
        engine.add_server("mongo", "docstore")
        with pytest.raises(CatalogError):
            engine.import_schema("mongo", sample=0)


class TestWrappers:
    def test_wrapper_is_reused(self, widget_engine):
        table = widget_engine.catalog.resolve("ymdb.stores")
        assert widget_engine.wrapper_for_table(table) is widget_engine.wrapper_for_table(table)

    def test_pushdown_change_rebuilds_the_wrapper(self, widget_engine):
        table = widget_engine.catalog.resolve("ymdb.stores")
        before = widget_engine.wrapper_for_table(table)
        widget_engine.settings = widget_engine.settings.with_overrides(
            {"planner.pushdown_enabled": False}, source="test"
        )
        after = widget_engine.wrapper_for_table(table)
        assert after is not before
        assert not after.pushdown_enabled

    def test_default_data_directory(self, engine, settings):
        engine.add_server("redis", "kv")
        engine.store_for("redis").write("pairs", [("a", "1")])
        assert engine.store_for("redis").data_dir == Path(settings.storage.data_dir) / "redis"
