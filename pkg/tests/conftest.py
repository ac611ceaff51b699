"""
Shared fixtures: isolated settings, an in-memory catalog, and small datasets
loaded into each of the three store emulators.
"""

import os
import sys
from pathlib import Path

import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from polyglot_qe.catalog import Catalog
from polyglot_qe.engine import QueryEngine
from polyglot_qe.relmodel import Timestamp
from polyglot_qe.settings import AppSettings, reset_settings

CORPUS_DIR = Path(__file__).parent / "corpus"

WIDGET_STORES = [
    {
        "_id": "store::1",
        "location": "Braga",
        "sells": [
            {"widget": {"id": "Widget1", "color": "red"}, "qty": 5},
            {"widget": {"id": "Widget2", "color": "blue"}, "qty": 2},
        ],
    },
    {
        "_id": "store::2",
        "location": "Lisboa",
        "sells": [{"widget": {"id": "Widget1", "color": "red"}, "qty": 7}],
    },
    {
        "_id": "store::3",
        "location": "Braga",
        "sells": [{"widget": {"id": "Widget2", "color": "blue"}, "qty": 1}],
    },
]


class FakeClock:
    """Deterministic clock for view refresh tests."""

    def __init__(self, start: str = "2024-01-01 00:00:00"):
        self.now = Timestamp.parse(start)

    def __call__(self) -> Timestamp:
        return self.now

    def advance(self, seconds: float) -> Timestamp:
        self.now = self.now.plus_seconds(seconds)
        return self.now


@pytest.fixture(autouse=True)
def _fresh_settings():
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def settings(tmp_path) -> AppSettings:
    return AppSettings().with_overrides(
        {
            "catalog.catalog_path": str(tmp_path / "catalog.yaml"),
            "storage.data_dir": str(tmp_path / "data"),
            "storage.views_dir": str(tmp_path / "views"),
        },
        source="test",
    )


@pytest.fixture
def clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def engine(settings, clock):
    qe = QueryEngine(settings, Catalog(autosave=False), clock=clock)
    yield qe
    qe.close()


@pytest.fixture
def widget_engine(engine):
    """Docstore server 'mongo' holding the widget stores, imported into schema ymdb."""
    engine.add_server("mongo", "docstore")
    engine.store_for("mongo").write_collection("stores", WIDGET_STORES)
    engine.import_schema("mongo", "ymdb", apply=True)
    return engine


@pytest.fixture
def district_engine(engine):
    """Widecolumn server 'cass' with a district family keyed by zero-padded (d_id, d_w_id)."""
    engine.add_server("cass", "widecolumn")
    rows = []
    for w_id in (1, 2):
        for d_id in range(1, 4):
            key = f"{d_id:05d}{w_id:05d}"
            rows.append((key, {"d_id": str(d_id), "d_w_id": str(w_id), "d_next_o_id": str(3000 + 10 * w_id + d_id)}))
    engine.store_for("cass").write_family("district", rows, qualifiers=["d_id", "d_w_id", "d_next_o_id"])
    engine.import_schema("cass", "cass", apply=True)
    engine.execute(
        "ALTER FOREIGN TABLE cass.district "
        "ALTER COLUMN key OPTIONS (composite 'd_id,d_w_id:str(d_id).zfill(5)+str(d_w_id).zfill(5)'), "
        "ALTER COLUMN d_id TYPE SMALLINT, ALTER COLUMN d_w_id TYPE SMALLINT, ALTER COLUMN d_next_o_id TYPE INTEGER"
    )
    return engine


@pytest.fixture
def kv_engine(engine):
    engine.add_server("redis", "kv")
    engine.store_for("redis").write("colors", [("red", "ff0000"), ("blue", "0000ff"), ("green", "00ff00")])
    engine.import_schema("redis", "kv", apply=True)
    return engine
