"""
Command-line interface for the polyglot query engine.

Results are written to stdout, diagnostics to stderr. Exit codes:
0 success, 1 user error (bad usage, SQL, catalog or store errors), 2 internal error.
"""

import argparse
import logging
import sys
import threading
from pathlib import Path
from typing import List, Optional, Sequence, TextIO

from pydantic import ValidationError

from .engine import QueryEngine, StatementResult
from .errors import PolyglotError
from .executor import QueryResult
from .log_setup import setup_logging
from .relmodel import Timestamp, Value, render_value
from .settings import AppSettings, get_config_sources, reload_settings, set_settings
from .sql_lexer import split_statements
from .sql_parser import parse
from .tpccbench import BACKENDS, TpccParams, run_bench

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2

PROMPT = "pqe> "
CONTINUATION_PROMPT = "...> "


class UsageError(Exception):
    pass


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting with status 2."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# output


def display_value(value: Value) -> str:
    """Cell text: bare strings and timestamps, canonical rendering for everything else."""
    if value is None:
        return "NULL"
    if isinstance(value, str):
        return value
    if isinstance(value, Timestamp):
        return value.render()
    return render_value(value)


def format_result(result: QueryResult, tsv: bool = False, header: bool = False) -> str:
    """Aligned columns, or tab-separated cells without padding when tsv is set."""
    lines = [[display_value(v) for v in row] for row in result.rows]
    if header:
        lines.insert(0, list(result.columns))
    if tsv:
        return "\n".join("\t".join(line) for line in lines)
    widths = [0] * len(result.columns)
    for line in lines:
        widths = [max(w, len(cell)) for w, cell in zip(widths, line)]
    text = [" | ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in lines]
    if header:
        text.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(text)


class Output:
    def __init__(self, tsv: bool, header: bool, out: Optional[TextIO] = None):
        self.tsv = tsv
        self.header = header
        self.out = out

    def statement(self, outcome: StatementResult) -> None:
        if outcome.result is not None:
            self.result(outcome.result)
        elif outcome.message:
            self.text(outcome.message)

    def result(self, result: QueryResult) -> None:
        text = format_result(result, self.tsv, self.header)
        if text:
            print(text, file=self.out or sys.stdout)
        logger.info(f"{len(result.rows)} rows in {result.elapsed:.3f}s, stats {result.stats}")

    def text(self, message: str) -> None:
        print(message, file=self.out or sys.stdout)


def report_error(error: BaseException) -> None:
    print(f"ERROR: {error}", file=sys.stderr)


# engine construction


def build_settings(args: argparse.Namespace) -> AppSettings:
    settings = reload_settings(args.config)
    overrides = {
        "catalog.catalog_path": args.catalog,
        "storage.data_dir": args.data_dir,
        "planner.bind_join_threshold": args.bind_join_threshold,
        "output.mode": "tsv" if args.tsv else None,
        "logging.log_level": args.log_level,
    }
    try:
        settings = settings.with_overrides(overrides, source="cli")
    except ValidationError as e:
        raise UsageError(f"invalid option value: {e}") from e
    set_settings(settings)
    return settings


def open_engine(settings: AppSettings) -> QueryEngine:
    return QueryEngine(settings)


# handlers


def handle_server_add(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    options = dict(args.option or [])
    change = engine.add_server(args.name, args.kind, data=args.data, options=options)
    output.text(str(change))
    return EXIT_OK


def handle_server_list(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    for server in sorted(engine.catalog.snapshot().servers.values(), key=lambda s: s.name):
        data = server.data_dir or "-"
        cells = [server.name, server.kind.value, server.default_schema, data]
        output.text(("\t" if output.tsv else "  ").join(cells))
    return EXIT_OK


def handle_load(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    count = engine.load_file(args.server, args.object, args.file)
    output.text(f"LOAD {count}")
    return EXIT_OK


def handle_import_schema(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    outcome = engine.import_schema(args.server, args.into, sample=args.sample, apply=args.apply)
    for statement in outcome.ddl():
        output.text(statement)
    for failure in outcome.result.failures:
        print(f"WARNING: {failure.source}: {failure.message}", file=sys.stderr)
    if args.apply:
        print(f"Applied {len(outcome.applied)} of {len(outcome.result.statements)} tables", file=sys.stderr)
    return EXIT_OK


def run_script(engine: QueryEngine, sql: str, output: Output) -> int:
    """Run statements in order; stop at the first failing one."""
    for text in split_statements(sql):
        output.statement(engine.execute_statement(parse(text)))
    return EXIT_OK


def repl(engine: QueryEngine, output: Output, stdin: Optional[TextIO] = None) -> int:
    """Read ;-terminated statements until end of input; errors are reported and the loop goes on."""
    stdin = stdin or sys.stdin
    interactive = stdin.isatty()
    buffer: List[str] = []
    while True:
        if interactive:
            print(CONTINUATION_PROMPT if buffer else PROMPT, end="", file=sys.stderr, flush=True)
        line = stdin.readline()
        if not line:
            break
        buffer.append(line)
        if not line.rstrip().endswith(";"):
            continue
        script = "".join(buffer)
        buffer = []
        try:
            run_script(engine, script, output)
        except PolyglotError as e:
            report_error(e)
    if "".join(buffer).strip():
        try:
            run_script(engine, "".join(buffer), output)
        except PolyglotError as e:
            report_error(e)
    if interactive:
        print(file=sys.stderr)
    return EXIT_OK


def handle_sql(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    if args.command_text is not None:
        return run_script(engine, args.command_text, output)
    if args.file is not None:
        path = Path(args.file)
        try:
            script = path.read_text(encoding="utf-8")
        except OSError as e:
            raise UsageError(f"cannot read {path}: {e}") from e
        return run_script(engine, script, output)
    return repl(engine, output)


def handle_explain(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    output.text(engine.explain(args.command_text))
    return EXIT_OK


def handle_view_refresh(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    name = str(engine.catalog.snapshot().qualify(args.name))
    report = engine.matviews.refresh(name)
    output.text(f"REFRESH MATERIALIZED VIEW {report.name} ({report.rows} rows, {report.duration:.3f}s)")
    return EXIT_OK


def handle_view_list(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    for name, view in sorted(engine.catalog.snapshot().views.items()):
        refreshed = view.last_refreshed.render() if view.last_refreshed else "never"
        interval = f"every {view.refresh_interval}s" if view.refresh_interval else "manual"
        output.text(("\t" if output.tsv else "  ").join([name, interval, refreshed]))
    return EXIT_OK


def handle_scheduler_run(engine: QueryEngine, args: argparse.Namespace, output: Output) -> int:
    tick_seconds = engine.settings.scheduler.tick_seconds
    if args.with_repl:
        engine.matviews.start(tick_seconds)
        try:
            return repl(engine, output)
        finally:
            engine.matviews.stop()

    stop_event = threading.Event()
    failures = 0
    ticks = 0
    try:
        while args.forever or ticks < args.ticks:
            tick = engine.matviews.scheduler_tick()
            ticks += 1
            for name in tick.refreshed:
                output.text(f"refreshed {name}")
            for name, message in tick.failures.items():
                failures += 1
                print(f"ERROR: refresh of {name} failed: {message}", file=sys.stderr)
            if args.forever or ticks < args.ticks:
                stop_event.wait(tick_seconds)
    except KeyboardInterrupt:
        logger.info("Scheduler interrupted")
    return EXIT_USER_ERROR if failures else EXIT_OK


def handle_bench_tpcc(engine: Optional[QueryEngine], args: argparse.Namespace, output: Output) -> int:
    params = TpccParams(
        warehouses=args.warehouses,
        customers_per_district=args.customers,
        items=args.items,
        seed=args.seed,
    )
    report = run_bench(
        args.backend,
        params,
        draws=args.draws,
        check=args.check,
        pushdown=not args.no_pushdown,
        workdir=args.workdir,
    )
    output.text(report.format())
    if args.check and not report.ok:
        print("ERROR: results disagree with the oracle", file=sys.stderr)
        return EXIT_USER_ERROR
    return EXIT_OK


# parser


def _key_value(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key, value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(
        prog="polyglot-qe",
        description="Polyglot query engine: SQL over document, wide-column and key-value stores",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s server add mongo --kind docstore --data ./data/mongo
  %(prog)s load mongo stores widgets.jsonl
  %(prog)s import-schema mongo --sample 100 --apply
  %(prog)s sql -c "SELECT location FROM ymdb.stores"
  %(prog)s explain -c "SELECT * FROM cass.district WHERE d_id = 1 AND d_w_id = 2"
  %(prog)s bench tpcc --backend widecolumn --warehouses 2 --seed 7 --check
        """,
    )
    parser.add_argument("--config", type=str, help="Configuration file path")
    parser.add_argument("--catalog", type=str, help="Catalog file (overrides catalog.catalog_path)")
    parser.add_argument("--data-dir", type=str, help="Root directory of store data (overrides storage.data_dir)")
    parser.add_argument(
        "--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=None, help="Logging level"
    )
    parser.add_argument("--tsv", action="store_true", help="Tab-separated output without padding")
    parser.add_argument("--header", action="store_true", help="Print column names above query results")
    parser.add_argument("--bind-join-threshold", type=int, help="Largest outer estimate for a bind join")
    parser.add_argument("--version", action="version", version="polyglot-qe 1.0.0")

    commands = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=CliArgumentParser)
    commands.required = True

    server = commands.add_parser("server", help="Register and list servers")
    server_commands = server.add_subparsers(dest="action", metavar="ACTION", parser_class=CliArgumentParser)
    server_commands.required = True
    server_add = server_commands.add_parser("add", help="Register a server")
    server_add.add_argument("name")
    server_add.add_argument("--kind", required=True, help="docstore, widecolumn or kv")
    server_add.add_argument("--data", help="Data directory of the store")
    server_add.add_argument(
        "--option", type=_key_value, action="append", metavar="KEY=VALUE", help="Extra connect option"
    )
    server_add.set_defaults(handler=handle_server_add)
    server_list = server_commands.add_parser("list", help="List servers")
    server_list.set_defaults(handler=handle_server_list)

    load = commands.add_parser("load", help="Replace a collection, column family or namespace from a file")
    load.add_argument("server")
    load.add_argument("object", help="Collection, column family or namespace name")
    load.add_argument("file", help="JSON / JSON lines for docstore, CSV otherwise")
    load.set_defaults(handler=handle_load)

    import_schema = commands.add_parser("import-schema", help="Infer foreign tables and print their DDL")
    import_schema.add_argument("server")
    import_schema.add_argument("--sample", type=_positive_int, help="Documents sampled per collection")
    import_schema.add_argument("--into", help="Local schema (default: the server's schema)")
    import_schema.add_argument("--apply", action="store_true", help="Add the tables to the catalog")
    import_schema.set_defaults(handler=handle_import_schema)

    sql = commands.add_parser("sql", help="Run SQL (interactive when neither -c nor -f is given)")
    source = sql.add_mutually_exclusive_group()
    source.add_argument("-c", dest="command_text", metavar="SQL", help="Statements to run")
    source.add_argument("-f", dest="file", metavar="FILE", help="Script to run")
    sql.set_defaults(handler=handle_sql)

    explain = commands.add_parser("explain", help="Show the plan of a query")
    explain.add_argument("-c", dest="command_text", metavar="SQL", required=True)
    explain.set_defaults(handler=handle_explain)

    view = commands.add_parser("view", help="Materialized views")
    view_commands = view.add_subparsers(dest="action", metavar="ACTION", parser_class=CliArgumentParser)
    view_commands.required = True
    view_refresh = view_commands.add_parser("refresh", help="Refresh a view now")
    view_refresh.add_argument("name")
    view_refresh.set_defaults(handler=handle_view_refresh)
    view_list = view_commands.add_parser("list", help="List views")
    view_list.set_defaults(handler=handle_view_list)

    scheduler = commands.add_parser("scheduler", help="Scheduled view refresh")
    scheduler_commands = scheduler.add_subparsers(dest="action", metavar="ACTION", parser_class=CliArgumentParser)
    scheduler_commands.required = True
    scheduler_run = scheduler_commands.add_parser("run", help="Run scheduler ticks")
    mode = scheduler_run.add_mutually_exclusive_group()
    mode.add_argument("--ticks", type=_positive_int, default=1, help="Number of ticks (default 1)")
    mode.add_argument("--forever", action="store_true", help="Tick until interrupted")
    mode.add_argument("--with-repl", action="store_true", help="Tick in the background while the REPL runs")
    scheduler_run.set_defaults(handler=handle_scheduler_run)

    bench = commands.add_parser("bench", help="Benchmarks")
    bench_commands = bench.add_subparsers(dest="action", metavar="BENCHMARK", parser_class=CliArgumentParser)
    bench_commands.required = True
    tpcc = bench_commands.add_parser("tpcc", help="Desk-scale TPC-C Stock-Level and Order-Status")
    tpcc.add_argument("--backend", choices=BACKENDS, required=True)
    tpcc.add_argument("--warehouses", type=_positive_int, default=1)
    tpcc.add_argument("--seed", type=int, default=7)
    tpcc.add_argument("--customers", type=_positive_int, default=30, help="Customers per district")
    tpcc.add_argument("--items", type=_positive_int, default=1000)
    tpcc.add_argument("--draws", type=_positive_int, default=50, help="Transactions to run")
    tpcc.add_argument("--check", action="store_true", help="Compare every result with the oracle")
    tpcc.add_argument("--no-pushdown", action="store_true", help="Disable all wrapper capabilities")
    tpcc.add_argument("--workdir", help="Keep generated store files here instead of a temporary directory")
    tpcc.set_defaults(handler=handle_bench_tpcc, standalone=True)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USER_ERROR
    except SystemExit as e:
        return int(e.code or 0)

    engine: Optional[QueryEngine] = None
    try:
        settings = build_settings(args)
        log_dir = settings.logging.log_dir if settings.logging.file_logging else None
        setup_logging(settings.logging.log_level, log_dir, settings.logging.log_config)
        logger.debug(f"Configuration sources:\n{get_config_sources().describe()}")
        output = Output(settings.output.mode == "tsv", args.header)
        if not getattr(args, "standalone", False):
            engine = open_engine(settings)
        return args.handler(engine, args, output)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USER_ERROR
    except PolyglotError as e:
        report_error(e)
        return EXIT_USER_ERROR
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        return EXIT_USER_ERROR
    except Exception as e:
        logger.exception(f"Internal error: {e}")
        print(f"INTERNAL ERROR: {e}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR
    finally:
        if engine is not None:
            engine.close()


if __name__ == "__main__":
    sys.exit(main())
