"""
Desk-scale TPC-C: data generator, store loaders, mapping DDL and the two
read-only transactions (Stock-Level and Order-Status).

The generator produces the nine TPC-C tables from a seeded numpy generator.
The normalized tables also serve as the oracle (pandas frames) that results of
both backends are checked against. The document store keeps every scalar as
text, with orders nested in customers and order lines nested in orders; the
wide-column store keeps one column family per table keyed by the zero-padded
primary key columns.
"""

import logging
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import psutil

from .catalog import Catalog
from .docstore import DocStore
from .engine import QueryEngine
from .errors import TpccError
from .keyexpr import evaluate, parse_spec
from .relmodel import Row, ScalarType, Timestamp, coerce
from .settings import AppSettings
from .sql_render import quote_string
from .widecolumn import WideColumnStore

logger = logging.getLogger(__name__)

BACKENDS = ("docstore", "widecolumn")
DOCSTORE_SERVER = "ymdbserver"
DOCSTORE_SCHEMA = "ymdb"
WIDECOLUMN_SERVER = "cassserver"
WIDECOLUMN_SCHEMA = "cass"
KEY_WIDTH = 5
RECENT_ORDERS = 20
UNDELIVERED_SHARE = 0.3
LINES_PER_ORDER = (5, 15)
BASE_TIME = Timestamp.parse("2024-01-01 00:00:00")
SYLLABLES = ("BAR", "OUGHT", "ABLE", "PRI", "PRES", "ESE", "ANTI", "CALLY", "ATION", "EING")

TYPE_NAMES = {
    ScalarType.SMALLINT: "smallint",
    ScalarType.INT: "integer",
    ScalarType.NUMERIC: "numeric",
    ScalarType.TEXT: "text",
    ScalarType.TIMESTAMP: "timestamp without time zone",
}


@dataclass(frozen=True)
class TableSpec:
    name: str
    columns: Tuple[Tuple[str, ScalarType], ...]
    key: Tuple[str, ...]

    @property
    def names(self) -> List[str]:
        return [c for c, _ in self.columns]

    @property
    def composite(self) -> str:
        """Row key expression: each key column zero-padded to KEY_WIDTH, concatenated."""
        return ",".join(self.key) + ":" + "+".join(f"str({c}).zfill({KEY_WIDTH})" for c in self.key)


S, I, N, T, TS = ScalarType.SMALLINT, ScalarType.INT, ScalarType.NUMERIC, ScalarType.TEXT, ScalarType.TIMESTAMP

TABLES: Dict[str, TableSpec] = {
    t.name: t
    for t in (
        TableSpec("warehouse", (("w_id", S), ("w_name", T), ("w_tax", N)), ("w_id",)),
        TableSpec(
            "district",
            (("d_id", S), ("d_w_id", S), ("d_name", T), ("d_tax", N), ("d_next_o_id", I)),
            ("d_id", "d_w_id"),
        ),
        TableSpec(
            "customer",
            (
                ("c_id", I), ("c_d_id", S), ("c_w_id", S), ("c_first", T), ("c_middle", T),
                ("c_last", T), ("c_since", TS), ("c_balance", N),
            ),
            ("c_id", "c_d_id", "c_w_id"),
        ),
        TableSpec(
            "history",
            (
                ("h_c_id", I), ("h_c_d_id", S), ("h_c_w_id", S), ("h_d_id", S), ("h_w_id", S),
                ("h_date", TS), ("h_amount", N),
            ),
            ("h_c_id", "h_c_d_id", "h_c_w_id"),
        ),
        TableSpec("new_order", (("no_o_id", I), ("no_d_id", S), ("no_w_id", S)), ("no_o_id", "no_d_id", "no_w_id")),
        TableSpec(
            "orders",
            (
                ("o_id", I), ("o_d_id", S), ("o_w_id", S), ("o_c_id", I), ("o_entry_d", TS),
                ("o_carrier_id", S), ("o_ol_cnt", S), ("o_all_local", S),
            ),
            ("o_id", "o_d_id", "o_w_id"),
        ),
        TableSpec(
            "order_line",
            (
                ("ol_o_id", I), ("ol_d_id", S), ("ol_w_id", S), ("ol_number", S), ("ol_i_id", I),
                ("ol_supply_w_id", S), ("ol_delivery_d", TS), ("ol_quantity", S), ("ol_amount", N),
            ),
            ("ol_o_id", "ol_d_id", "ol_w_id", "ol_number"),
        ),
        TableSpec("item", (("i_id", I), ("i_name", T), ("i_price", N)), ("i_id",)),
        TableSpec("stock", (("s_i_id", I), ("s_w_id", S), ("s_quantity", S)), ("s_i_id", "s_w_id")),
    )
}

# document layout: collection, unwound paths, columns read from the outer document
DOCUMENT_LAYOUT: Dict[str, Tuple[str, Tuple[str, ...], Dict[str, str]]] = {
    "warehouse": ("WAREHOUSE", (), {}),
    "district": ("DISTRICT", (), {}),
    "customer": ("CUSTOMER", (), {}),
    "history": ("CUSTOMER", ("HISTORY",), {"h_c_id": "C_ID", "h_c_d_id": "C_D_ID", "h_c_w_id": "C_W_ID"}),
    "new_order": ("NEW_ORDER", (), {}),
    "orders": ("CUSTOMER", ("ORDERS",), {"o_c_id": "C_ID", "o_d_id": "C_D_ID", "o_w_id": "C_W_ID"}),
    "order_line": (
        "CUSTOMER",
        ("ORDERS", "ORDERS.ORDER_LINE"),
        {"ol_o_id": "ORDERS.O_ID", "ol_d_id": "C_D_ID", "ol_w_id": "C_W_ID"},
    ),
    "item": ("ITEM", (), {}),
    "stock": ("STOCK", (), {}),
}

CUSTOMER_COLUMNS = ("c_id", "c_first", "c_middle", "c_last", "c_balance")
ORDER_COLUMNS = ("o_id", "o_entry_d", "o_carrier_id")
LINE_COLUMNS = ("ol_number", "ol_i_id", "ol_supply_w_id", "ol_quantity", "ol_amount", "ol_delivery_d")


@dataclass(frozen=True)
class TpccParams:
    warehouses: int = 1
    districts_per_warehouse: int = 10
    customers_per_district: int = 30
    orders_per_customer: Tuple[int, int] = (1, 5)
    items: int = 1000
    seed: int = 7

    def __post_init__(self) -> None:
        low, high = self.orders_per_customer
        values = (self.warehouses, self.districts_per_warehouse, self.customers_per_district, self.items, low)
        if min(values) < 1 or high < low:
            raise TpccError("TPC-C parameters must be positive", {"params": repr(self)})
        if self.items > 99999 or self.customers_per_district > 99999:
            raise TpccError(f"identifiers must fit in {KEY_WIDTH} digits")


@dataclass(frozen=True)
class CustomerById:
    w_id: int
    d_id: int
    c_id: int


@dataclass(frozen=True)
class CustomerByName:
    w_id: int
    d_id: int
    c_last: str


Selector = Union[CustomerById, CustomerByName]


@dataclass(frozen=True)
class OrderStatus:
    customer: Row
    order: Optional[Row]
    lines: Tuple[Row, ...]


def last_name(number: int) -> str:
    return SYLLABLES[number // 100] + SYLLABLES[(number // 10) % 10] + SYLLABLES[number % 10]


def _word(rng: np.random.Generator, low: int, high: int) -> str:
    length = int(rng.integers(low, high + 1))
    return "".join(chr(ord("a") + int(i)) for i in rng.integers(0, 26, size=length)).capitalize()


def _money(rng: np.random.Generator, low: float, high: float) -> float:
    return round(float(rng.uniform(low, high)), 2)


class TpccOracle:
    """Normalized TPC-C tables with native values; evaluates both transactions with pandas."""

    def __init__(self, params: TpccParams, rows: Dict[str, List[Dict[str, Any]]]):
        self.params = params
        self.rows = rows
        self.frames: Dict[str, pd.DataFrame] = {
            name: pd.DataFrame({c: pd.Series([r[c] for r in rows[name]], dtype=object) for c in spec.names})
            for name, spec in TABLES.items()
        }

    def count(self, table: str) -> int:
        return len(self.rows[table])

    def next_order_id(self, w_id: int, d_id: int) -> int:
        district = self.frames["district"]
        match = district[(district.d_w_id == w_id) & (district.d_id == d_id)]
        if match.empty:
            raise TpccError(f"unknown district {d_id} of warehouse {w_id}")
        return int(match.iloc[0]["d_next_o_id"])

    def stock_level(self, w_id: int, d_id: int, threshold: int) -> int:
        next_o_id = self.next_order_id(w_id, d_id)
        lines = self.frames["order_line"]
        recent = lines[
            (lines.ol_w_id == w_id)
            & (lines.ol_d_id == d_id)
            & (lines.ol_o_id >= next_o_id - RECENT_ORDERS)
            & (lines.ol_o_id < next_o_id)
        ]
        stock = self.frames["stock"]
        low = stock[(stock.s_w_id == w_id) & (stock.s_quantity < threshold)]
        merged = recent.merge(low, left_on="ol_i_id", right_on="s_i_id")
        return int(merged["s_i_id"].nunique())

    def _customer(self, selector: Selector) -> Row:
        customers = self.frames["customer"]
        scope = customers[(customers.c_w_id == selector.w_id) & (customers.c_d_id == selector.d_id)]
        if isinstance(selector, CustomerById):
            matches = scope[scope.c_id == selector.c_id]
        else:
            matches = scope[scope.c_last == selector.c_last].sort_values(["c_first", "c_id"], kind="mergesort")
        if matches.empty:
            raise TpccError(f"no customer matches {selector}")
        middle = (len(matches) - 1) // 2
        return tuple(matches.iloc[middle][list(CUSTOMER_COLUMNS)].tolist())

    def order_status(self, selector: Selector) -> OrderStatus:
        customer = self._customer(selector)
        orders = self.frames["orders"]
        mine = orders[
            (orders.o_w_id == selector.w_id) & (orders.o_d_id == selector.d_id) & (orders.o_c_id == customer[0])
        ]
        if mine.empty:
            return OrderStatus(customer, None, ())
        last = mine.sort_values("o_id", ascending=False).iloc[0]
        order = tuple(last[list(ORDER_COLUMNS)].tolist())
        lines = self.frames["order_line"]
        chosen = lines[
            (lines.ol_w_id == selector.w_id) & (lines.ol_d_id == selector.d_id) & (lines.ol_o_id == order[0])
        ].sort_values("ol_number")
        return OrderStatus(customer, order, tuple(tuple(r) for r in chosen[list(LINE_COLUMNS)].itertuples(index=False)))


def generate(params: TpccParams) -> TpccOracle:
    """Deterministic dataset for params (same seed, same rows)."""
    rng = np.random.default_rng(params.seed)
    rows: Dict[str, List[Dict[str, Any]]] = {name: [] for name in TABLES}
    name_pool = max(1, params.customers_per_district // 3)

    for i_id in range(1, params.items + 1):
        rows["item"].append({"i_id": i_id, "i_name": _word(rng, 6, 12), "i_price": _money(rng, 1.0, 100.0)})

    for w_id in range(1, params.warehouses + 1):
        rows["warehouse"].append(
            {"w_id": w_id, "w_name": _word(rng, 6, 10), "w_tax": round(float(rng.uniform(0, 0.2)), 4)}
        )
        for i_id in range(1, params.items + 1):
            rows["stock"].append({"s_i_id": i_id, "s_w_id": w_id, "s_quantity": int(rng.integers(10, 101))})

        for d_id in range(1, params.districts_per_warehouse + 1):
            district_orders: List[int] = []
            for c_id in range(1, params.customers_per_district + 1):
                since = BASE_TIME.plus_seconds(-86400 * int(rng.integers(1, 366)))
                rows["customer"].append(
                    {
                        "c_id": c_id,
                        "c_d_id": d_id,
                        "c_w_id": w_id,
                        "c_first": _word(rng, 8, 16),
                        "c_middle": "OE",
                        "c_last": last_name(int(rng.integers(0, name_pool))),
                        "c_since": since,
                        "c_balance": _money(rng, -100.0, 1000.0),
                    }
                )
                rows["history"].append(
                    {
                        "h_c_id": c_id,
                        "h_c_d_id": d_id,
                        "h_c_w_id": w_id,
                        "h_d_id": d_id,
                        "h_w_id": w_id,
                        "h_date": since,
                        "h_amount": 10.0,
                    }
                )
                low, high = params.orders_per_customer
                district_orders.extend([c_id] * int(rng.integers(low, high + 1)))

            order_customers = [district_orders[int(i)] for i in rng.permutation(len(district_orders))]
            total = len(order_customers)
            first_undelivered = total - int(math.floor(total * UNDELIVERED_SHARE)) + 1
            for o_id, c_id in enumerate(order_customers, start=1):
                entry = BASE_TIME.plus_seconds(60 * o_id + 3600 * d_id)
                delivered = o_id < first_undelivered
                line_count = int(rng.integers(LINES_PER_ORDER[0], LINES_PER_ORDER[1] + 1))
                rows["orders"].append(
                    {
                        "o_id": o_id,
                        "o_d_id": d_id,
                        "o_w_id": w_id,
                        "o_c_id": c_id,
                        "o_entry_d": entry,
                        "o_carrier_id": int(rng.integers(1, 11)) if delivered else None,
                        "o_ol_cnt": line_count,
                        "o_all_local": 1,
                    }
                )
                if not delivered:
                    rows["new_order"].append({"no_o_id": o_id, "no_d_id": d_id, "no_w_id": w_id})
                for number in range(1, line_count + 1):
                    rows["order_line"].append(
                        {
                            "ol_o_id": o_id,
                            "ol_d_id": d_id,
                            "ol_w_id": w_id,
                            "ol_number": number,
                            "ol_i_id": int(rng.integers(1, params.items + 1)),
                            "ol_supply_w_id": w_id,
                            "ol_delivery_d": entry.plus_seconds(86400) if delivered else None,
                            "ol_quantity": int(rng.integers(1, 11)),
                            "ol_amount": _money(rng, 0.01, 9999.99),
                        }
                    )
            rows["district"].append(
                {
                    "d_id": d_id,
                    "d_w_id": w_id,
                    "d_name": _word(rng, 6, 10),
                    "d_tax": round(float(rng.uniform(0, 0.2)), 4),
                    "d_next_o_id": total + 1,
                }
            )

    logger.info(
        f"Generated TPC-C W={params.warehouses} seed={params.seed}: "
        + ", ".join(f"{name}={len(r)}" for name, r in rows.items())
    )
    return TpccOracle(params, rows)


# loading


def _text(value: Any) -> str:
    return coerce(value, ScalarType.TEXT)


def _fields(row: Dict[str, Any], names: Sequence[str]) -> Dict[str, str]:
    """Upper-case field names with text values; NULLs are left out."""
    return {name.upper(): _text(row[name]) for name in names if row[name] is not None}


def customer_documents(oracle: TpccOracle) -> List[Dict[str, Any]]:
    """CUSTOMER documents embedding HISTORY, and ORDERS that embed ORDER_LINE."""
    lines: Dict[Tuple[int, int, int], List[Dict[str, Any]]] = {}
    for line in oracle.rows["order_line"]:
        lines.setdefault((line["ol_w_id"], line["ol_d_id"], line["ol_o_id"]), []).append(line)
    orders: Dict[Tuple[int, int, int], List[Dict[str, Any]]] = {}
    for order in sorted(oracle.rows["orders"], key=lambda o: o["o_id"]):
        orders.setdefault((order["o_w_id"], order["o_d_id"], order["o_c_id"]), []).append(order)
    history: Dict[Tuple[int, int, int], List[Dict[str, Any]]] = {}
    for entry in oracle.rows["history"]:
        history.setdefault((entry["h_c_w_id"], entry["h_c_d_id"], entry["h_c_id"]), []).append(entry)

    line_fields = ["ol_number", "ol_i_id", "ol_supply_w_id", "ol_delivery_d", "ol_quantity", "ol_amount"]
    order_fields = ["o_id", "o_entry_d", "o_carrier_id", "o_ol_cnt", "o_all_local"]
    history_fields = ["h_d_id", "h_w_id", "h_date", "h_amount"]
    docs = []
    for customer in oracle.rows["customer"]:
        w_id, d_id, c_id = customer["c_w_id"], customer["c_d_id"], customer["c_id"]
        doc: Dict[str, Any] = {"_id": f"{w_id}.{d_id}.{c_id}"}
        doc.update(_fields(customer, TABLES["customer"].names))
        doc["HISTORY"] = [_fields(h, history_fields) for h in history.get((w_id, d_id, c_id), [])]
        doc["ORDERS"] = []
        for order in orders.get((w_id, d_id, c_id), []):
            nested = _fields(order, order_fields)
            nested["ORDER_LINE"] = [_fields(l, line_fields) for l in lines[(w_id, d_id, order["o_id"])]]
            doc["ORDERS"].append(nested)
        docs.append(doc)
    return docs


def load_docstore(oracle: TpccOracle, data_dir: str) -> Dict[str, int]:
    store = DocStore(data_dir)
    counts = {"CUSTOMER": len(oracle.rows["customer"])}
    store.write_collection("CUSTOMER", customer_documents(oracle))
    for table in ("warehouse", "district", "new_order", "item", "stock"):
        collection = DOCUMENT_LAYOUT[table][0]
        spec = TABLES[table]
        docs = []
        for number, row in enumerate(oracle.rows[table], start=1):
            doc: Dict[str, Any] = {"_id": f"{collection.lower()}:{number}"}
            doc.update(_fields(row, spec.names))
            docs.append(doc)
        store.write_collection(collection, docs)
        counts[collection] = len(docs)
    logger.info(f"Loaded document store at {data_dir}: {counts}")
    return counts


def load_widecolumn(oracle: TpccOracle, data_dir: str) -> Dict[str, int]:
    store = WideColumnStore(data_dir)
    counts = {}
    for name, spec in TABLES.items():
        key_spec = parse_spec(spec.composite)
        entries = []
        for row in oracle.rows[name]:
            key = evaluate(key_spec, {c: row[c] for c in spec.key})
            entries.append((key, {c: _text(row[c]) for c in spec.names if row[c] is not None}))
        store.write_family(name, entries, qualifiers=spec.names)
        counts[name] = len(entries)
    logger.info(f"Loaded wide-column store at {data_dir}: {counts}")
    return counts


# mapping DDL


def _column_path(table: str, column: str) -> str:
    _, unwinds, outer = DOCUMENT_LAYOUT[table]
    if column in outer:
        return outer[column]
    return f"{unwinds[-1]}.{column.upper()}" if unwinds else column.upper()


def docstore_ddl(server: str = DOCSTORE_SERVER, schema: str = DOCSTORE_SCHEMA) -> str:
    """Drop whatever the import produced for each table and recreate it with TPC-C names and types."""
    statements = []
    for name, spec in TABLES.items():
        collection, unwinds, _ = DOCUMENT_LAYOUT[name]
        columns = ",\n".join(
            f" {c} {TYPE_NAMES[t]} OPTIONS (mname {quote_string(_column_path(name, c))})" for c, t in spec.columns
        )
        options = [f"collection {quote_string(collection)}", "db 'tpcc'", "encoding 'text'"]
        if unwinds:
            pipe = "[" + ", ".join(f'{{"$unwind": "${path}"}}' for path in unwinds) + "]"
            options.append(f"pipe {quote_string(pipe)}")
        statements.append(f"DROP FOREIGN TABLE IF EXISTS {schema}.{name}")
        statements.append(
            f"CREATE FOREIGN TABLE {schema}.{name} (\n{columns}\n)\nSERVER {server}\nOPTIONS ({', '.join(options)})"
        )
    return ";\n".join(statements) + ";\n"


def widecolumn_ddl(schema: str = WIDECOLUMN_SCHEMA) -> str:
    """Refine imported column families: composite row key and typed columns."""
    statements = []
    for name, spec in TABLES.items():
        actions = [f"  ALTER COLUMN key OPTIONS (composite {quote_string(spec.composite)})"]
        actions += [
            f"  ALTER COLUMN {c} TYPE {TYPE_NAMES[t].upper()}" for c, t in spec.columns if t is not ScalarType.TEXT
        ]
        statements.append(f"ALTER FOREIGN TABLE {schema}.{name}\n" + ",\n".join(actions))
    return ";\n".join(statements) + ";\n"


# transactions


class TpccBackend:
    """Runs the TPC-C transactions as SQL against one backend of a QueryEngine."""

    def __init__(self, engine: QueryEngine, schema: str, kind: str):
        self.engine = engine
        self.schema = schema
        self.kind = kind
        self.stats: Dict[str, int] = {}
        self.last_stats: Dict[str, int] = {}

    @classmethod
    def prepare(
        cls,
        kind: str,
        oracle: TpccOracle,
        workdir: str,
        pushdown: bool = True,
        engine: Optional[QueryEngine] = None,
    ) -> "TpccBackend":
        """Load the oracle into a fresh store under workdir and map it."""
        if kind not in BACKENDS:
            raise TpccError(f"unknown TPC-C backend {kind!r}", {"expected": ", ".join(BACKENDS)})
        root = Path(workdir)
        if engine is None:
            settings = AppSettings().with_overrides(
                {
                    "storage.data_dir": str(root / "data"),
                    "storage.views_dir": str(root / "views"),
                    "planner.pushdown_enabled": pushdown,
                },
                source="bench",
            )
            engine = QueryEngine(settings, Catalog(autosave=False))
        data_dir = str(root / "data" / kind)
        if kind == "docstore":
            load_docstore(oracle, data_dir)
            engine.add_server(DOCSTORE_SERVER, "docstore", data=data_dir)
            engine.import_schema(DOCSTORE_SERVER, DOCSTORE_SCHEMA, sample=100, apply=True)
            engine.execute(docstore_ddl())
            return cls(engine, DOCSTORE_SCHEMA, kind)
        load_widecolumn(oracle, data_dir)
        engine.add_server(WIDECOLUMN_SERVER, "widecolumn", data=data_dir)
        engine.import_schema(WIDECOLUMN_SERVER, WIDECOLUMN_SCHEMA, apply=True)
        engine.execute(widecolumn_ddl())
        return cls(engine, WIDECOLUMN_SCHEMA, kind)

    def query(self, sql: str) -> List[Row]:
        result = self.engine.query(sql)
        self.last_stats = result.stats
        for counter, value in result.stats.items():
            self.stats[counter] = self.stats.get(counter, 0) + value
        return result.rows

    def district_sql(self, w_id: int, d_id: int) -> str:
        return f"SELECT d_next_o_id FROM {self.schema}.district WHERE d_w_id = {w_id} AND d_id = {d_id}"

    def stock_level_sql(self, w_id: int, d_id: int, next_o_id: int, threshold: int) -> str:
        return (
            f"SELECT COUNT(DISTINCT s_i_id) FROM {self.schema}.order_line "
            f"JOIN {self.schema}.stock ON s_i_id = ol_i_id AND s_w_id = ol_w_id "
            f"WHERE ol_w_id = {w_id} AND ol_d_id = {d_id} "
            f"AND ol_o_id < {next_o_id} AND ol_o_id >= {next_o_id - RECENT_ORDERS} "
            f"AND s_w_id = {w_id} AND s_quantity < {threshold}"
        )

    def customer_sql(self, selector: Selector) -> str:
        base = (
            f"SELECT {', '.join(CUSTOMER_COLUMNS)} FROM {self.schema}.customer "
            f"WHERE c_w_id = {selector.w_id} AND c_d_id = {selector.d_id}"
        )
        if isinstance(selector, CustomerById):
            return f"{base} AND c_id = {selector.c_id}"
        return f"{base} AND c_last = {quote_string(selector.c_last)} ORDER BY c_first, c_id"

    def orders_sql(self, w_id: int, d_id: int, c_id: int) -> str:
        return (
            f"SELECT {', '.join(ORDER_COLUMNS)} FROM {self.schema}.orders "
            f"WHERE o_w_id = {w_id} AND o_d_id = {d_id} AND o_c_id = {c_id} ORDER BY o_id DESC"
        )

    def lines_sql(self, w_id: int, d_id: int, o_id: int) -> str:
        return (
            f"SELECT {', '.join(LINE_COLUMNS)} FROM {self.schema}.order_line "
            f"WHERE ol_w_id = {w_id} AND ol_d_id = {d_id} AND ol_o_id = {o_id} ORDER BY ol_number"
        )

    def stock_level(self, w_id: int, d_id: int, threshold: int) -> int:
        district = self.query(self.district_sql(w_id, d_id))
        if not district:
            raise TpccError(f"unknown district {d_id} of warehouse {w_id}")
        next_o_id = district[0][0]
        return self.query(self.stock_level_sql(w_id, d_id, next_o_id, threshold))[0][0]

    def order_status(self, selector: Selector) -> OrderStatus:
        customers = self.query(self.customer_sql(selector))
        if not customers:
            raise TpccError(f"no customer matches {selector}")
        customer = customers[(len(customers) - 1) // 2]
        orders = self.query(self.orders_sql(selector.w_id, selector.d_id, customer[0]))
        if not orders:
            return OrderStatus(customer, None, ())
        lines = self.query(self.lines_sql(selector.w_id, selector.d_id, orders[0][0]))
        return OrderStatus(customer, orders[0], tuple(lines))


# workload


@dataclass(frozen=True)
class Draw:
    transaction: str
    args: Tuple[Any, ...]


def draw_workload(oracle: TpccOracle, count: int, seed: int) -> List[Draw]:
    """Alternating Stock-Level and Order-Status invocations; 60% of Order-Status select by name."""
    rng = np.random.default_rng(seed)
    params = oracle.params
    customers = oracle.frames["customer"]
    draws = []
    for number in range(count):
        w_id = int(rng.integers(1, params.warehouses + 1))
        d_id = int(rng.integers(1, params.districts_per_warehouse + 1))
        if number % 2 == 0:
            draws.append(Draw("stock_level", (w_id, d_id, int(rng.integers(10, 21)))))
            continue
        c_id = int(rng.integers(1, params.customers_per_district + 1))
        if rng.random() < 0.6:
            row = customers[(customers.c_w_id == w_id) & (customers.c_d_id == d_id) & (customers.c_id == c_id)]
            selector: Selector = CustomerByName(w_id, d_id, row.iloc[0]["c_last"])
        else:
            selector = CustomerById(w_id, d_id, c_id)
        draws.append(Draw("order_status", (selector,)))
    return draws


def run_draw(target: Union[TpccBackend, TpccOracle], draw: Draw) -> Any:
    if draw.transaction == "stock_level":
        return target.stock_level(*draw.args)
    return target.order_status(*draw.args)


@dataclass
class BenchReport:
    backend: str
    params: TpccParams
    pushdown: bool
    runs: Dict[str, int] = field(default_factory=dict)
    mismatches: Dict[str, int] = field(default_factory=dict)
    checked: bool = False
    stats: Dict[str, int] = field(default_factory=dict)
    elapsed: float = 0.0
    memory_mb: float = 0.0

    @property
    def ok(self) -> bool:
        return not any(self.mismatches.values())

    def format(self) -> str:
        lines = [
            f"TPC-C backend={self.backend} warehouses={self.params.warehouses} seed={self.params.seed} "
            f"pushdown={'on' if self.pushdown else 'off'}",
            f"{'transaction':<14}{'runs':>8}{'mismatches':>12}",
        ]
        for name in ("stock_level", "order_status"):
            mismatches = str(self.mismatches.get(name, 0)) if self.checked else "-"
            lines.append(f"{name:<14}{self.runs.get(name, 0):>8}{mismatches:>12}")
        lines.append(f"{'counter':<14}{'value':>20}")
        for counter in ("point_gets", "scans", "rows_emitted"):
            lines.append(f"{counter:<14}{self.stats.get(counter, 0):>20}")
        lines.append(f"{'elapsed_s':<14}{self.elapsed:>20.3f}")
        lines.append(f"{'memory_mib':<14}{self.memory_mb:>20.1f}")
        return "\n".join(lines)


def run_bench(
    backend: str,
    params: TpccParams,
    draws: int = 50,
    check: bool = False,
    pushdown: bool = True,
    workdir: Optional[str] = None,
) -> BenchReport:
    started = time.perf_counter()
    oracle = generate(params)
    with tempfile.TemporaryDirectory(prefix="tpcc-") as scratch:
        runner = TpccBackend.prepare(backend, oracle, workdir or scratch, pushdown=pushdown)
        report = BenchReport(backend, params, pushdown, checked=check)
        for draw in draw_workload(oracle, draws, params.seed + 1):
            report.runs[draw.transaction] = report.runs.get(draw.transaction, 0) + 1
            got = run_draw(runner, draw)
            if check:
                expected = run_draw(oracle, draw)
                if got != expected:
                    logger.error(f"{backend} disagrees with the oracle on {draw}: {got!r} != {expected!r}")
                    report.mismatches[draw.transaction] = report.mismatches.get(draw.transaction, 0) + 1
        report.stats = dict(runner.stats)
        runner.engine.close()
    report.elapsed = time.perf_counter() - started
    report.memory_mb = psutil.Process().memory_info().rss / 1024 / 1024
    logger.info(f"TPC-C bench on {backend} finished in {report.elapsed:.2f}s")
    return report
