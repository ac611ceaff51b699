"""
Materialized views: locally stored query results with manual and scheduled refresh.

Rows of every view are held as an immutable snapshot that refresh replaces in
one assignment, so a reader that already started iterating keeps the rows it
began with. Snapshots are also written to ``<views_dir>/<schema>.<name>.jsonl``
so a restarted engine serves the last refreshed rows.
"""

import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .catalog import Catalog, MatViewDef
from .errors import MatViewError, PolyglotError, UnknownObjectError
from .executor import QueryResult
from .relmodel import RelSchema, Row, Timestamp, coerce, from_json, to_json
from .sql_ast import QualifiedName, Query

logger = logging.getLogger(__name__)

Clock = Callable[[], Timestamp]
QueryRunner = Callable[[Query], QueryResult]

MICROS = 1_000_000


@dataclass(frozen=True)
class ViewSnapshot:
    schema: RelSchema
    rows: Tuple[Row, ...]
    last_refreshed: Optional[Timestamp]


@dataclass(frozen=True)
class RefreshReport:
    name: str
    rows: int
    duration: float


@dataclass
class RefreshJob:
    name: str
    interval_secs: int
    next_due: Timestamp

    def __post_init__(self) -> None:
        if self.interval_secs < 1:
            raise MatViewError(f"refresh interval of {self.name} must be at least 1 second")

    def advance(self, now: Timestamp) -> None:
        """Move next_due forward by whole intervals until it lies after now."""
        step = self.interval_secs * MICROS
        if self.next_due.micros <= now.micros:
            periods = (now.micros - self.next_due.micros) // step + 1
            self.next_due = Timestamp(self.next_due.micros + periods * step)


@dataclass
class SchedulerTick:
    refreshed: List[str] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)


class MatViewStorage:
    """Current snapshot per view, optionally mirrored to JSON lines files."""

    def __init__(self, views_dir: Optional[str] = None):
        self.views_dir = Path(views_dir) if views_dir else None
        self._snapshots: Dict[str, ViewSnapshot] = {}

    def path_for(self, name: str) -> Optional[Path]:
        return None if self.views_dir is None else self.views_dir / f"{name}.jsonl"

    def has(self, name: str) -> bool:
        return name in self._snapshots

    def snapshot(self, name: str) -> ViewSnapshot:
        try:
            return self._snapshots[name]
        except KeyError:
            raise MatViewError(f"materialized view {name} has no stored rows") from None

    def rows(self, name: str) -> Sequence[Row]:
        return self.snapshot(name).rows

    def put(self, name: str, snapshot: ViewSnapshot) -> None:
        path = self.path_for(name)
        if path is not None:
            self._write(path, name, snapshot)
        self._snapshots[name] = snapshot

    def discard(self, name: str) -> None:
        self._snapshots.pop(name, None)
        path = self.path_for(name)
        if path is not None and path.exists():
            path.unlink()
            logger.debug(f"Removed stored rows of {name} at {path}")

    @staticmethod
    def _write(path: Path, name: str, snapshot: ViewSnapshot) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            "view": name,
            "columns": snapshot.schema.names,
            "last_refreshed": snapshot.last_refreshed.render() if snapshot.last_refreshed else None,
        }
        temp_path = path.with_name(path.name + ".tmp")
        with open(temp_path, "w", encoding="utf-8") as f:
            f.write(json.dumps(header) + "\n")
            for row in snapshot.rows:
                f.write(json.dumps([to_json(v) for v in row]) + "\n")
        temp_path.replace(path)

    def restore(self, view: MatViewDef) -> bool:
        """Load the persisted rows of view; False when there are none usable."""
        path = self.path_for(view.qualified)
        if path is None or not path.is_file():
            return False
        try:
            with open(path, encoding="utf-8") as f:
                header = json.loads(f.readline())
                if header.get("columns") != view.schema.names:
                    logger.warning(f"Stored rows of {view.qualified} do not match its columns; ignoring {path}")
                    return False
                types = [c.type for c in view.schema.columns]
                rows = []
                for line in f:
                    if line.strip():
                        values = from_json(json.loads(line))
                        rows.append(tuple(None if v is None else coerce(v, t) for v, t in zip(values, types)))
        except (OSError, ValueError, PolyglotError) as exc:
            logger.warning(f"Cannot restore rows of {view.qualified} from {path}: {exc}")
            return False
        refreshed = Timestamp.parse(header["last_refreshed"]) if header.get("last_refreshed") else None
        self._snapshots[view.qualified] = ViewSnapshot(view.schema, tuple(rows), refreshed)
        logger.info(f"Restored {len(rows)} rows of {view.qualified}")
        return True


class MatViewManager:
    """Creates, refreshes and schedules materialized views of one catalog."""

    def __init__(
        self,
        catalog: Catalog,
        storage: MatViewStorage,
        runner: QueryRunner,
        clock: Clock = Timestamp.now,
    ):
        self.catalog = catalog
        self.storage = storage
        self.runner = runner
        self.clock = clock
        self.jobs: Dict[str, RefreshJob] = {}
        self._view_locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._tick_lock = threading.Lock()
        self._stop_event = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _lock_for(self, name: str) -> threading.Lock:
        with self._locks_guard:
            return self._view_locks.setdefault(name, threading.Lock())

    def rows(self, name: str) -> Sequence[Row]:
        return self.storage.rows(name)

    def _materialize(self, view: MatViewDef) -> Tuple[ViewSnapshot, float]:
        started = time.perf_counter()
        result = self.runner(view.query)
        if len(result.columns) != len(view.schema):
            raise MatViewError(
                f"query of {view.qualified} now returns {len(result.columns)} columns, expected {len(view.schema)}"
            )
        snapshot = ViewSnapshot(view.schema, tuple(result.rows), self.clock())
        return snapshot, time.perf_counter() - started

    def create_view(self, view: MatViewDef) -> RefreshReport:
        name = view.qualified
        with self._lock_for(name):
            snapshot, duration = self._materialize(view)
            stored = replace(view, last_refreshed=snapshot.last_refreshed)
            self.catalog.add_view(stored)
            try:
                self.storage.put(name, snapshot)
            except OSError as exc:
                self.catalog.drop_view(name, if_exists=True)
                raise MatViewError(f"cannot store rows of {name}: {exc}") from exc
        if view.refresh_interval:
            self._register(name, view.refresh_interval, snapshot.last_refreshed.plus_seconds(view.refresh_interval))
        logger.info(f"Created materialized view {name} with {len(snapshot.rows)} rows")
        return RefreshReport(name, len(snapshot.rows), duration)

    def _view(self, name: str) -> MatViewDef:
        view = self.catalog.resolve(name)
        if not isinstance(view, MatViewDef):
            raise UnknownObjectError(f"{name} is not a materialized view")
        return view

    def refresh(self, name: str) -> RefreshReport:
        """Re-run the view's query and swap the stored rows; on failure the old rows stay."""
        view = self._view(name)
        qualified = view.qualified
        with self._lock_for(qualified):
            try:
                snapshot, duration = self._materialize(view)
                self.storage.put(qualified, snapshot)
            except PolyglotError as exc:
                logger.warning(f"Refresh of {qualified} failed, keeping previous rows: {exc}")
                raise MatViewError(f"refresh of {qualified} failed: {exc}", {"view": qualified}) from exc
            except OSError as exc:
                raise MatViewError(f"cannot store rows of {qualified}: {exc}") from exc
            self.catalog.update_view(replace(view, last_refreshed=snapshot.last_refreshed))
        logger.info(f"Refreshed {qualified}: {len(snapshot.rows)} rows in {duration:.3f}s")
        return RefreshReport(qualified, len(snapshot.rows), duration)

    def drop_view(self, name: QualifiedName, if_exists: bool = False) -> None:
        change = self.catalog.drop_view(name, if_exists)
        if change.action == "drop":
            self.jobs.pop(change.name, None)
            self.storage.discard(change.name)

    # scheduling

    def _register(self, name: str, interval: int, next_due: Timestamp) -> RefreshJob:
        job = RefreshJob(name, interval, next_due)
        self.jobs[name] = job
        logger.debug(f"Scheduled {name} every {interval}s, next at {next_due}")
        return job

    def restore(self) -> None:
        """Load persisted rows and re-create refresh jobs for every view in the catalog."""
        now = self.clock()
        for view in self.catalog.snapshot().views.values():
            if not self.storage.has(view.qualified):
                self.storage.restore(view)
            if view.refresh_interval:
                due = view.last_refreshed.plus_seconds(view.refresh_interval) if view.last_refreshed else now
                self._register(view.qualified, view.refresh_interval, due)

    def scheduler_tick(self, now: Optional[Timestamp] = None) -> SchedulerTick:
        now = now or self.clock()
        tick = SchedulerTick()
        with self._tick_lock:
            for name in sorted(self.jobs):
                job = self.jobs[name]
                if job.next_due > now:
                    continue
                job.advance(now)
                try:
                    self.refresh(name)
                except PolyglotError as exc:
                    tick.failures[name] = str(exc)
                    continue
                tick.refreshed.append(name)
        return tick

    def start(self, tick_seconds: float = 1.0) -> None:
        """Run scheduler ticks on a background thread until stop()."""
        if self._thread is not None and self._thread.is_alive():
            logger.warning("Scheduler is already running")
            return
        self._stop_event.clear()
        self._thread = threading.Thread(
            target=self._loop, args=(tick_seconds,), name="MatView-Scheduler", daemon=True
        )
        self._thread.start()
        logger.info(f"Scheduler started, ticking every {tick_seconds}s")

    def _loop(self, tick_seconds: float) -> None:
        while not self._stop_event.is_set():
            try:
                tick = self.scheduler_tick()
                for name, message in tick.failures.items():
                    logger.error(f"Scheduled refresh of {name} failed: {message}")
            except Exception as e:
                logger.error(f"Scheduler tick failed: {e}")
            self._stop_event.wait(tick_seconds)

    def stop(self) -> None:
        self._stop_event.set()
        if self._thread and self._thread.is_alive():
            self._thread.join(timeout=10)
            if self._thread.is_alive():
                logger.warning("Scheduler thread did not stop cleanly")
        self._thread = None
