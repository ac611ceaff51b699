"""Key-value store emulator and its scan-only wrapper."""

import pytest

from polyglot_qe.errors import StoreError, StoreUnavailableError
from polyglot_qe.kvstore import KvStore
from polyglot_qe.wrapper import Predicate, ScanRequest, SortKey


def test_write_and_read(tmp_path):
    store = KvStore(str(tmp_path))
    store.write("colors", [("red", "ff0000"), ("blue", "0000ff")])
    assert store.namespaces() == ["colors"]
    assert store.get("colors", "red") == "ff0000"
    assert store.get("colors", "pink") is None
    assert list(store.scan("colors")) == [("red", "ff0000"), ("blue", "0000ff")]


@pytest.mark.parametrize(
    "text",
    ["k,v\na,1\n", "key,value\na,1,2\n", "key,value\na,1\na,2\n", ""],
)
def test_malformed_namespace_files(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text, encoding="utf-8")
    with pytest.raises(StoreError):
        KvStore(str(tmp_path)).load("bad")


def test_missing_namespace(tmp_path):
    with pytest.raises(StoreUnavailableError):
        KvStore(str(tmp_path)).load("nothing")


class TestWrapper:
    def test_everything_stays_with_the_mediator(self, kv_engine):
        table = kv_engine.catalog.resolve("kv.colors")
        wrapper = kv_engine.wrapper_for_table(table)
        plan = wrapper.plan_scan(
            ScanRequest(table, ("value",), (Predicate("key", "=", "red"),), (SortKey("value"),), 1)
        )
        assert plan.accepted == ()
        assert plan.residual == (Predicate("key", "=", "red"),)
        assert not plan.sort_accepted
        assert not plan.limit_accepted
        assert plan.native_text == "SCAN colors"
        assert plan.est_rows == 3.0

    def test_lookup_by_key_scans(self, kv_engine):
        sql = "SELECT value FROM kv.colors WHERE key = 'red'"
        explain = kv_engine.explain(sql)
        assert "native: SCAN colors" in explain
        assert "Filter colors.key = 'red'" in explain
        result = kv_engine.query(sql)
        assert result.rows == [("ff0000",)]
        assert result.stats == {"point_gets": 0, "scans": 1, "rows_emitted": 3}

    def test_ordering_and_limit_at_the_mediator(self, kv_engine):
        result = kv_engine.query("SELECT key FROM kv.colors ORDER BY value DESC LIMIT 2")
        assert result.rows == [("red",), ("green",)]

    def test_import_maps_namespaces(self, engine):
        engine.add_server("redis", "kv")
        engine.store_for("redis").write("Pairs", [("a", "1")])
        outcome = engine.import_schema("redis", "kv")
        assert outcome.ddl() == [
            "CREATE FOREIGN TABLE kv.pairs (key TEXT, value TEXT) SERVER redis OPTIONS (ns 'Pairs');"
        ]
