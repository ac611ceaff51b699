"""Command-line interface tests: output formats, exit codes and the main workflows."""

import io
import json
import os

import pytest

from conftest import WIDGET_STORES
from polyglot_qe import cli
from polyglot_qe.cli import EXIT_INTERNAL_ERROR, EXIT_OK, EXIT_USER_ERROR, display_value, format_result, main
from polyglot_qe.executor import QueryResult
from polyglot_qe.relmodel import Timestamp


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in list(os.environ):
        if name.startswith("PQE_"):
            monkeypatch.delenv(name)
    return tmp_path


@pytest.fixture
def widgets(workdir):
    """A docstore server with the widget stores loaded and imported into ymdb."""
    source = workdir / "widgets.jsonl"
    source.write_text("".join(json.dumps(doc) + "\n" for doc in WIDGET_STORES), encoding="utf-8")
    assert main(["server", "add", "mongo", "--kind", "docstore", "--data", str(workdir / "mongo")]) == EXIT_OK
    assert main(["load", "mongo", "stores", str(source)]) == EXIT_OK
    assert main(["import-schema", "mongo", "--into", "ymdb", "--apply"]) == EXIT_OK
    return workdir


class TestFormatting:
    def test_display_values(self):
        assert display_value(None) == "NULL"
        assert display_value("it's") == "it's"
        assert display_value(True) == "TRUE"
        assert display_value(2.5) == "2.5"
        assert display_value(Timestamp.parse("2024-01-01 10:00:00")) == "2024-01-01 10:00:00"
        assert display_value({"id": "Widget1", "qty": 5}) == "{id: 'Widget1', qty: 5}"

    def test_aligned_table_with_header(self):
        result = QueryResult(["a", "bb"], [(1, "x"), (None, "longer")])
        assert format_result(result, header=True).splitlines() == [
            "a    | bb",
            "-----+-------",
            "1    | x",
            "NULL | longer",
        ]

    def test_tsv_has_no_padding(self):
        result = QueryResult(["a", "b"], [(1, "x y"), (22, None)])
        assert format_result(result, tsv=True) == "1\tx y\n22\tNULL"

    def test_empty_result_without_header(self):
        assert format_result(QueryResult(["a"], [])) == ""


class TestExitCodes:
    def test_select_one(self, workdir, capsys):
        assert main(["sql", "-c", "SELECT 1"]) == EXIT_OK
        assert capsys.readouterr().out == "1\n"

    def test_header_flag(self, workdir, capsys):
        assert main(["--header", "sql", "-c", "SELECT 1 AS one"]) == EXIT_OK
        assert capsys.readouterr().out == "one\n---\n1\n"

    def test_tsv_flag(self, workdir, capsys):
        assert main(["--tsv", "sql", "-c", "SELECT 1, 'a b'"]) == EXIT_OK
        assert capsys.readouterr().out == "1\ta b\n"

    def test_syntax_error_is_a_user_error(self, workdir, capsys):
        assert main(["sql", "-c", "SELEC 1"]) == EXIT_USER_ERROR
        assert capsys.readouterr().err.startswith("ERROR: ")

    def test_bad_usage(self, workdir, capsys):
        assert main(["frobnicate"]) == EXIT_USER_ERROR
        assert main([]) == EXIT_USER_ERROR
        assert main(["import-schema", "mongo", "--sample", "0"]) == EXIT_USER_ERROR

    def test_unknown_server(self, workdir, capsys):
        assert main(["load", "nowhere", "x", "missing.csv"]) == EXIT_USER_ERROR
        assert "ERROR" in capsys.readouterr().err

    def test_internal_error(self, workdir, monkeypatch, capsys):
        def broken(settings):
            raise RuntimeError("boom")

        monkeypatch.setattr(cli, "open_engine", broken)
        assert main(["sql", "-c", "SELECT 1"]) == EXIT_INTERNAL_ERROR
        assert "INTERNAL ERROR: boom" in capsys.readouterr().err

    def test_script_stops_at_first_error(self, workdir, capsys):
        assert main(["sql", "-c", "SELECT 1; SELECT nope; SELECT 3"]) == EXIT_USER_ERROR
        assert capsys.readouterr().out == "1\n"


class TestWorkflow:
    def test_server_list(self, widgets, capsys):
        capsys.readouterr()
        assert main(["server", "list"]) == EXIT_OK
        name, kind, _, data = capsys.readouterr().out.split()
        assert (name, kind) == ("mongo", "docstore")
        assert data.endswith("mongo")

    def test_import_prints_ddl(self, workdir, capsys):
        source = workdir / "widgets.json"
        source.write_text(json.dumps(WIDGET_STORES), encoding="utf-8")
        main(["server", "add", "mongo", "--kind", "docstore", "--data", str(workdir / "mongo")])
        main(["load", "mongo", "stores", str(source)])
        capsys.readouterr()
        assert main(["import-schema", "mongo", "--into", "ymdb"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("CREATE FOREIGN TABLE ymdb.stores (")
        assert lines[1].startswith("CREATE FOREIGN TABLE ymdb.stores_sells (")

    def test_query_and_explain(self, widgets, capsys):
        capsys.readouterr()
        assert main(["sql", "-c", "SELECT location FROM ymdb.stores ORDER BY location"]) == EXIT_OK
        assert capsys.readouterr().out == "Braga\nBraga\nLisboa\n"
        assert main(["explain", "-c", "SELECT _id FROM ymdb.stores WHERE location = 'Braga'"]) == EXIT_OK
        assert "ForeignScan ymdb.stores" in capsys.readouterr().out

    def test_script_file(self, widgets, capsys):
        script = widgets / "script.sql"
        script.write_text("SELECT COUNT(*) FROM ymdb.stores;\nSELECT COUNT(*) FROM ymdb.stores_sells;\n")
        capsys.readouterr()
        assert main(["sql", "-f", str(script)]) == EXIT_OK
        assert capsys.readouterr().out == "3\n4\n"
        assert main(["sql", "-f", str(widgets / "missing.sql")]) == EXIT_USER_ERROR

    def test_repl_reports_errors_and_continues(self, widgets, monkeypatch, capsys):
        monkeypatch.setattr("sys.stdin", io.StringIO("SELECT 1;\nSELEC 2;\nSELECT\n 3;\nSELECT 4"))
        capsys.readouterr()
        assert main(["sql"]) == EXIT_OK
        captured = capsys.readouterr()
        assert captured.out == "1\n3\n4\n"
        assert captured.err.count("ERROR: ") == 1

    def test_views_and_scheduler(self, widgets, capsys):
        create = (
            "CREATE MATERIALIZED VIEW red AS SELECT _parent_id FROM ymdb.stores_sells "
            "WHERE widget_color = 'red' REFRESH EVERY 3600 SECONDS"
        )
        assert main(["sql", "-c", create]) == EXIT_OK
        assert capsys.readouterr().out == "CREATE MATERIALIZED VIEW public.red (2 rows)\n"
        assert main(["view", "list"]) == EXIT_OK
        name, interval, *_ = capsys.readouterr().out.split("  ")
        assert (name, interval) == ("public.red", "every 3600s")
        assert main(["view", "refresh", "red"]) == EXIT_OK
        assert capsys.readouterr().out.startswith("REFRESH MATERIALIZED VIEW public.red (2 rows, ")
        assert main(["scheduler", "run", "--ticks", "1"]) == EXIT_OK
        assert capsys.readouterr().out == ""
        assert main(["sql", "-c", "SELECT _parent_id FROM red ORDER BY 1"]) == EXIT_OK
        assert capsys.readouterr().out == "store::1\nstore::2\n"

    def test_load_widecolumn_csv(self, workdir, capsys):
        source = workdir / "district.csv"
        source.write_text("key,d_id,d_w_id\n0000100001,1,1\n0000200001,2,1\n", encoding="utf-8")
        main(["server", "add", "cass", "--kind", "widecolumn", "--data", str(workdir / "cass")])
        assert main(["load", "cass", "district", str(source)]) == EXIT_OK
        assert capsys.readouterr().out.splitlines()[-1] == "LOAD 2"
        main(["import-schema", "cass", "--apply"])
        capsys.readouterr()
        assert main(["--tsv", "sql", "-c", "SELECT key, d_id FROM cass.district WHERE d_id = '2'"]) == EXIT_OK
        assert capsys.readouterr().out == "0000200001\t2\n"


@pytest.mark.integration
def test_bench_command(workdir, capsys):
    args = ["bench", "tpcc", "--backend", "widecolumn", "--items", "50", "--customers", "6", "--draws", "4", "--check"]
    assert main(args) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("TPC-C backend=widecolumn warehouses=1 seed=7 pushdown=on")
