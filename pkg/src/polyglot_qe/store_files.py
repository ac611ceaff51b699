"""File-backed storage shared by the in-process store emulators."""

import logging
import os
import threading
from pathlib import Path
from typing import Any, Dict, Generic, List, Optional, Tuple, TypeVar

from .errors import StoreError, StoreUnavailableError

logger = logging.getLogger(__name__)

T = TypeVar("T")


class FileBackedStore(Generic[T]):
    """One data file per collection / column family / namespace under a directory.

    Files are parsed lazily and re-read when their modification time or size
    changes; a missing file makes the object unavailable.
    """

    suffix = ""
    kind = "store"

    def __init__(self, data_dir: str):
        self.data_dir = Path(data_dir)
        self._cache: Dict[str, Tuple[Tuple[int, int], T]] = {}
        self._lock = threading.Lock()

    def path_for(self, name: str) -> Path:
        if not name or os.sep in name or name in (".", ".."):
            raise StoreError(f"invalid {self.kind} object name {name!r}")
        return self.data_dir / f"{name}{self.suffix}"

    def names(self) -> List[str]:
        if not self.data_dir.is_dir():
            raise StoreUnavailableError(f"{self.kind} data directory {self.data_dir} does not exist")
        return sorted(p.name[: -len(self.suffix)] for p in self.data_dir.glob(f"*{self.suffix}") if p.is_file())

    def exists(self, name: str) -> bool:
        return self.path_for(name).is_file()

    def _parse(self, name: str, path: Path) -> T:
        raise NotImplementedError

    def load(self, name: str) -> T:
        path = self.path_for(name)
        try:
            stat = path.stat()
        except FileNotFoundError:
            with self._lock:
                self._cache.pop(name, None)
            raise StoreUnavailableError(
                f"{self.kind} object {name!r} is not available", {"path": str(path)}
            ) from None
        signature = (stat.st_mtime_ns, stat.st_size)
        with self._lock:
            cached = self._cache.get(name)
            if cached is not None and cached[0] == signature:
                return cached[1]
        try:
            parsed = self._parse(name, path)
        except OSError as exc:
            raise StoreUnavailableError(f"cannot read {path}: {exc}", {"path": str(path)}) from exc
        logger.debug(f"Loaded {self.kind} object {name!r} from {path}")
        with self._lock:
            self._cache[name] = (signature, parsed)
        return parsed

    def invalidate(self, name: Optional[str] = None) -> None:
        with self._lock:
            if name is None:
                self._cache.clear()
            else:
                self._cache.pop(name, None)

    def _write_atomic(self, name: str, text: str) -> Path:
        path = self.path_for(name)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        temp_path = path.with_name(path.name + ".tmp")
        temp_path.write_text(text, encoding="utf-8")
        temp_path.replace(path)
        self.invalidate(name)
        return path

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "data_dir": str(self.data_dir)}
