"""
Generated queries checked against a naive in-memory evaluation.

Every query runs with and without push-down, and joins additionally under each
join strategy; all runs must return the same multiset of rows as scanning
everything and filtering, joining and grouping in plain Python. Queries with
ORDER BY (and LIMIT) must return the same rows in the same order. The data
includes a collection whose integers are partly stored as text and a
text-encoded collection.
"""

from collections import Counter
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pytest

pytestmark = pytest.mark.integration

Truth = Optional[bool]
Pred = Tuple[str, Callable[[Dict], Truth]]

GROUPS = ["a", "b", "c"]
TAGS = ["x", "y", "z"]
LABELS = {"a": "alpha", "b": "beta"}
OPERATORS = {
    "=": lambda c: c == 0,
    "<>": lambda c: c != 0,
    "<": lambda c: c < 0,
    "<=": lambda c: c <= 0,
    ">": lambda c: c > 0,
    ">=": lambda c: c >= 0,
}


# table: (dataset rows, numeric columns, text columns with words to compare against, unique key)
SINGLE_TABLES = {
    "app.items": ("items", ["n", "_id"], {"grp": GROUPS}, "_id"),
    "app.mixed": ("mixed", ["v", "_id"], {"label": TAGS}, "_id"),
    "app.texty": ("texty", ["q", "_id"], {"label": TAGS}, "_id"),
    "cass.ratings": ("ratings", ["score", "item"], {"key": ["00003", "00012", "00040"]}, "item"),
    "kv.counts": ("counts", ["value"], {"key": ["k01", "k07", "k30"]}, "key"),
}


def sign(a, b) -> Optional[int]:
    if a is None or b is None:
        return None
    return (a > b) - (a < b)


def sql_not(v: Truth) -> Truth:
    return None if v is None else not v


def sql_and(a: Truth, b: Truth) -> Truth:
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def sql_or(a: Truth, b: Truth) -> Truth:
    if a is True or b is True:
        return True
    if a is None or b is None:
        return None
    return False


class PredicateGenerator:
    """Random WHERE clauses paired with their three-valued evaluation."""

    def __init__(self, rng: np.random.Generator, int_columns: List[str], text_columns: Dict[str, List[str]]):
        self.rng = rng
        self.int_columns = int_columns
        self.text_columns = text_columns

    def pick(self, items):
        return items[int(self.rng.integers(len(items)))]

    def number(self) -> int:
        return int(self.rng.integers(0, 10))

    def atom(self, prefix: str) -> Pred:
        kind = int(self.rng.integers(4))
        if kind == 0:
            column, op, k = self.pick(self.int_columns), self.pick(list(OPERATORS)), self.number()
            test = OPERATORS[op]
            return f"{prefix}{column} {op} {k}", lambda r, c=column: None if r[c] is None else test(sign(r[c], k))
        if kind == 1:
            column = self.pick(list(self.text_columns))
            word = self.pick(self.text_columns[column])
            if self.rng.random() < 0.5:
                return f"{prefix}{column} = '{word}'", lambda r, c=column: None if r[c] is None else r[c] == word
            return f"{prefix}{column} <> '{word}'", lambda r, c=column: None if r[c] is None else r[c] != word
        if kind == 2:
            column = self.pick(self.int_columns)
            items = sorted({self.number() for _ in range(int(self.rng.integers(1, 4)))})
            text = ", ".join(str(i) for i in items)
            if self.rng.random() < 0.5:
                return f"{prefix}{column} IN ({text})", lambda r, c=column: None if r[c] is None else r[c] in items
            return f"{prefix}{column} NOT IN ({text})", lambda r, c=column: None if r[c] is None else r[c] not in items
        column = self.pick(self.int_columns)
        if self.rng.random() < 0.5:
            return f"{prefix}{column} IS NULL", lambda r, c=column: r[c] is None
        return f"{prefix}{column} IS NOT NULL", lambda r, c=column: r[c] is not None

    def predicate(self, prefix: str = "", depth: int = 2) -> Pred:
        kind = int(self.rng.integers(4)) if depth > 0 else 0
        if kind == 0:
            return self.atom(prefix)
        if kind == 1:
            text, fn = self.predicate(prefix, depth - 1)
            return f"NOT ({text})", lambda r: sql_not(fn(r))
        (lt, lf), (rt, rf) = self.predicate(prefix, depth - 1), self.predicate(prefix, depth - 1)
        if kind == 2:
            return f"({lt} AND {rt})", lambda r: sql_and(lf(r), rf(r))
        return f"({lt} OR {rt})", lambda r: sql_or(lf(r), rf(r))


@pytest.fixture(scope="module")
def dataset():
    rng = np.random.default_rng(7)
    items, tags, docs = [], [], []
    for item_id in range(1, 41):
        doc = {"_id": item_id, "grp": GROUPS[int(rng.integers(3))]}
        roll = rng.random()
        n = None if roll < 0.2 else int(rng.integers(0, 10))
        if roll >= 0.1:
            doc["n"] = n
        if rng.random() < 0.8:
            doc["tags"] = []
            for _ in range(int(rng.integers(0, 4))):
                tag = {"t": TAGS[int(rng.integers(3))], "w": int(rng.integers(0, 10))}
                doc["tags"].append(tag)
                tags.append({"_parent_id": item_id, "t": tag["t"], "w": tag["w"]})
        items.append({"_id": item_id, "grp": doc["grp"], "n": n})
        docs.append(doc)
    ratings = []
    for item in rng.choice(np.arange(1, 46), size=25, replace=False):
        score = None if rng.random() < 0.15 else int(rng.integers(0, 10))
        ratings.append({"item": int(item), "score": score, "key": f"{int(item):05d}"})
    mixed_docs, mixed = [], []
    for doc_id in range(1, 31):
        v = None if rng.random() < 0.15 else int(rng.integers(0, 10))
        label = TAGS[int(rng.integers(3))]
        doc = {"_id": doc_id, "label": label}
        if v is not None:
            # a third of the values are stored as numeric text
            doc["v"] = (str(v) if rng.random() < 0.5 else f"{v:02d}") if doc_id % 3 == 0 else v
        mixed_docs.append(doc)
        mixed.append({"_id": doc_id, "v": v, "label": label})
    text_docs, texty = [], []
    for doc_id in range(1, 31):
        q = None if rng.random() < 0.15 else int(rng.integers(0, 10)) + (0.5 if rng.random() < 0.3 else 0.0)
        label = TAGS[int(rng.integers(3))]
        doc = {"_id": str(doc_id), "label": label}
        if q is not None:
            forms = [f"{q:g}", f"{q:.1f}", f"0{q:g}"] if q.is_integer() else [f"{q:g}", f"{q:.2f}"]
            doc["q"] = forms[int(rng.integers(len(forms)))]
        text_docs.append(doc)
        texty.append({"_id": doc_id, "q": q, "label": label})
    counts = [{"key": f"k{i:02d}", "value": int(rng.integers(0, 10))} for i in range(1, 21)]
    return {
        "items": items,
        "tags": tags,
        "docs": docs,
        "ratings": ratings,
        "mixed_docs": mixed_docs,
        "mixed": mixed,
        "text_docs": text_docs,
        "texty": texty,
        "counts": counts,
    }


@pytest.fixture
def federated(engine, dataset):
    engine.add_server("mongo", "docstore")
    engine.store_for("mongo").write_collection("items", dataset["docs"])
    engine.store_for("mongo").write_collection("mixed", dataset["mixed_docs"])
    engine.import_schema("mongo", "app", apply=True)
    engine.store_for("mongo").write_collection("texty", dataset["text_docs"])
    engine.execute(
        "CREATE FOREIGN TABLE app.texty (_id INTEGER, q DOUBLE PRECISION, label TEXT) "
        "SERVER mongo OPTIONS (collection 'texty', encoding 'text')"
    )

    engine.add_server("cass", "widecolumn")
    rows = []
    for rating in dataset["ratings"]:
        cells = {"item": str(rating["item"])}
        if rating["score"] is not None:
            cells["score"] = str(rating["score"])
        rows.append((f"{rating['item']:05d}", cells))
    engine.store_for("cass").write_family("ratings", rows, qualifiers=["item", "score"])
    engine.import_schema("cass", "cass", apply=True)
    engine.execute(
        "ALTER FOREIGN TABLE cass.ratings "
        "ALTER COLUMN key OPTIONS (composite 'item:str(item).zfill(5)'), "
        "ALTER COLUMN item TYPE INTEGER, ALTER COLUMN score TYPE INTEGER"
    )

    engine.add_server("redis", "kv")
    engine.store_for("redis").write("groups", sorted(LABELS.items()))
    engine.store_for("redis").write("counts", [(c["key"], str(c["value"])) for c in dataset["counts"]])
    engine.import_schema("redis", "kv", apply=True)
    engine.execute("ALTER FOREIGN TABLE kv.counts ALTER COLUMN value TYPE INTEGER")
    return engine


def set_pushdown(engine, enabled: bool) -> None:
    engine.settings = engine.settings.with_overrides({"planner.pushdown_enabled": enabled}, source="test")


def check(engine, sql: str, expected: List[tuple], strategies=(None,)) -> None:
    want = Counter(expected)
    for pushdown in (True, False):
        set_pushdown(engine, pushdown)
        for strategy in strategies:
            engine.force_join = strategy
            got = Counter(engine.query(sql).rows)
            assert got == want, f"{sql} (pushdown={pushdown}, join={strategy})"
    engine.force_join = None
    set_pushdown(engine, True)


def check_ordered(engine, sql: str, expected: List[tuple]) -> None:
    for pushdown in (True, False):
        set_pushdown(engine, pushdown)
        assert engine.query(sql).rows == expected, f"{sql} (pushdown={pushdown})"
    set_pushdown(engine, True)


def single_table(dataset, table: str, seed: int):
    source, numeric, text, key = SINGLE_TABLES[table]
    columns = list(dict.fromkeys([key, numeric[0], *text]))
    generator = PredicateGenerator(np.random.default_rng(seed), numeric, text)
    return dataset[source], columns, generator, key


def sql_order(rows: List[Dict], column: str, descending: bool, key: str) -> List[Dict]:
    """ORDER BY column [DESC], key with NULL first ascending and last descending."""
    by_key = sorted(rows, key=lambda r: r[key])
    return sorted(
        by_key, key=lambda r: (r[column] is not None, 0 if r[column] is None else r[column]), reverse=descending
    )


def test_single_table_filters(federated, dataset):
    generator = PredicateGenerator(np.random.default_rng(101), ["n", "_id"], {"grp": GROUPS})
    for _ in range(60):
        text, fn = generator.predicate()
        expected = [(r["_id"], r["n"]) for r in dataset["items"] if fn(r) is True]
        check(federated, f"SELECT _id, n FROM app.items WHERE {text}", expected)


def test_child_table_filters(federated, dataset):
    generator = PredicateGenerator(np.random.default_rng(202), ["w", "_parent_id"], {"t": TAGS})
    for _ in range(40):
        text, fn = generator.predicate()
        expected = [(r["_parent_id"], r["t"], r["w"]) for r in dataset["tags"] if fn(r) is True]
        check(federated, f"SELECT _parent_id, t, w FROM app.items_tags WHERE {text}", expected)


def test_grouped_aggregates(federated, dataset):
    generator = PredicateGenerator(np.random.default_rng(303), ["n", "_id"], {"grp": GROUPS})
    for _ in range(30):
        text, fn = generator.predicate()
        groups: Dict[str, List[Optional[int]]] = {}
        for r in dataset["items"]:
            if fn(r) is True:
                groups.setdefault(r["grp"], []).append(r["n"])
        expected = []
        for grp, values in groups.items():
            present = [v for v in values if v is not None]
            expected.append(
                (
                    grp,
                    len(values),
                    len(present),
                    sum(present) if present else None,
                    min(present, default=None),
                    max(present, default=None),
                    len(set(present)),
                )
            )
        sql = (
            "SELECT grp, COUNT(*), COUNT(n), SUM(n), MIN(n), MAX(n), COUNT(DISTINCT n) "
            f"FROM app.items WHERE {text} GROUP BY grp"
        )
        check(federated, sql, expected)


def test_joins_with_widecolumn(federated, dataset):
    generator = PredicateGenerator(np.random.default_rng(404), ["n", "_id"], {"grp": GROUPS})
    scores = {r["item"]: r["score"] for r in dataset["ratings"]}
    for _ in range(30):
        text, fn = generator.predicate("i.")
        expected = [(r["_id"], scores[r["_id"]]) for r in dataset["items"] if r["_id"] in scores and fn(r) is True]
        sql = f"SELECT i._id, r.score FROM app.items AS i JOIN cass.ratings AS r ON i._id = r.item WHERE {text}"
        check(federated, sql, expected, strategies=(None, "hash", "bind"))


def test_joins_with_kv(federated, dataset):
    generator = PredicateGenerator(np.random.default_rng(505), ["n", "_id"], {"grp": GROUPS})
    for _ in range(20):
        text, fn = generator.predicate("i.")
        expected = [(r["_id"], LABELS[r["grp"]]) for r in dataset["items"] if r["grp"] in LABELS and fn(r) is True]
        sql = f"SELECT i._id, g.value FROM app.items AS i JOIN kv.groups AS g ON i.grp = g.key WHERE {text}"
        check(federated, sql, expected, strategies=(None, "hash"))


def test_parent_child_joins(federated, dataset):
    generator = PredicateGenerator(np.random.default_rng(606), ["n", "_id"], {"grp": GROUPS})
    by_id = {r["_id"]: r for r in dataset["items"]}
    for _ in range(20):
        text, fn = generator.predicate("i.")
        expected = [
            (t["_parent_id"], t["t"]) for t in dataset["tags"] if fn(by_id[t["_parent_id"]]) is True
        ]
        sql = f"SELECT i._id, x.t FROM app.items AS i JOIN app.items_tags AS x ON i._id = x._parent_id WHERE {text}"
        check(federated, sql, expected, strategies=(None, "hash", "bind"))


def test_three_way_join(federated, dataset):
    scores = {r["item"]: r["score"] for r in dataset["ratings"]}
    expected = [
        (r["_id"], LABELS[r["grp"]], scores[r["_id"]])
        for r in dataset["items"]
        if r["grp"] in LABELS and r["_id"] in scores and scores[r["_id"]] is not None and scores[r["_id"]] >= 5
    ]
    sql = (
        "SELECT i._id, g.value, r.score FROM app.items AS i "
        "JOIN kv.groups AS g ON i.grp = g.key "
        "JOIN cass.ratings AS r ON r.item = i._id "
        "WHERE r.score >= 5"
    )
    check(federated, sql, expected, strategies=(None, "hash", "bind"))


@pytest.mark.parametrize("table", list(SINGLE_TABLES))
def test_single_table_filters_per_backend(federated, dataset, table):
    rows, columns, generator, _ = single_table(dataset, table, 700 + list(SINGLE_TABLES).index(table))
    for _ in range(30):
        text, fn = generator.predicate()
        expected = [tuple(r[c] for c in columns) for r in rows if fn(r) is True]
        check(federated, f"SELECT {', '.join(columns)} FROM {table} WHERE {text}", expected)


@pytest.mark.parametrize("table", list(SINGLE_TABLES))
def test_order_limit_and_distinct(federated, dataset, table):
    seed = 800 + list(SINGLE_TABLES).index(table)
    rows, columns, generator, key = single_table(dataset, table, seed)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        text, fn = generator.predicate()
        kept = [r for r in rows if fn(r) is True]
        column = generator.pick(generator.int_columns)
        descending = bool(rng.random() < 0.5)
        order = f"{column} DESC" if descending else column
        if column != key:
            order += f", {key}"
        expected = [tuple(r[c] for c in columns) for r in sql_order(kept, column, descending, key)]
        sql = f"SELECT {', '.join(columns)} FROM {table} WHERE {text} ORDER BY {order}"
        check_ordered(federated, sql, expected)
        limit = int(rng.integers(1, 8))
        check_ordered(federated, f"{sql} LIMIT {limit}", expected[:limit])
        distinct = [(value,) for value in {r[column] for r in kept}]
        check(federated, f"SELECT DISTINCT {column} FROM {table} WHERE {text}", distinct)


@pytest.mark.parametrize("table", ["app.mixed", "app.texty"])
def test_grouped_aggregates_over_stored_text(federated, dataset, table):
    rows, _, generator, _ = single_table(dataset, table, 900 + ["app.mixed", "app.texty"].index(table))
    column = SINGLE_TABLES[table][1][0]
    for _ in range(20):
        text, fn = generator.predicate()
        groups: Dict[str, List] = {}
        for r in rows:
            if fn(r) is True:
                groups.setdefault(r["label"], []).append(r[column])
        expected = []
        for label, values in groups.items():
            present = [v for v in values if v is not None]
            expected.append((label, len(values), min(present, default=None), max(present, default=None)))
        sql = f"SELECT label, COUNT(*), MIN({column}), MAX({column}) FROM {table} WHERE {text} GROUP BY label"
        check(federated, sql, expected)


def test_unfiltered_sort_pushes_down_on_mixed_values(federated, dataset):
    expected = [(r["_id"], r["v"]) for r in sql_order(dataset["mixed"], "v", True, "_id")][:5]
    sql = "SELECT _id, v FROM app.mixed ORDER BY v DESC, _id LIMIT 5"
    assert "Sort" not in federated.explain(sql)
    check_ordered(federated, sql, expected)
