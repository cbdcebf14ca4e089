"""Grid sweeps with a content-addressed cell cache and an optional process pool.

Cells are plain JSON-able parameter dicts evaluated by a module-level
function.  Results are merged by cell index, so output does not depend on
the number of workers or on completion order.  Each finished cell is written
atomically to the cache under ``sha256(function, params, code version)``;
rerunning a sweep with the same cache recomputes nothing.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

log = logging.getLogger(__name__)

CACHE_ENV = "BLOCHSIM_CACHE_DIR"


@lru_cache(maxsize=1)
def code_version() -> str:
    """Hash of the package sources; changes whenever any module changes."""
    from . import __version__

    h = hashlib.sha256(__version__.encode())
    root = Path(__file__).parent
    for path in sorted(root.rglob("*.py")):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class CellCache:
    """Directory of finished cells.  With ``read=False`` entries are written
    but never looked up, so a fresh run recomputes everything while still
    leaving a cache behind for a later resume."""

    def __init__(self, directory, read: bool = True):
        self.directory = Path(directory)
        self.read = read

    @classmethod
    def from_env(cls, default=None, read: bool = True) -> Optional["CellCache"]:
        d = os.environ.get(CACHE_ENV, default)
        return cls(d, read) if d else None

    def key(self, fn_name: str, params: dict) -> str:
        blob = json.dumps({"fn": fn_name, "params": params, "code": code_version()},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str):
        path = self._path(key)
        if not self.read or not path.exists():
            return None
        try:
            return json.loads(path.read_text())["result"]
        except (OSError, ValueError, KeyError):
            log.warning("ignoring unreadable cache entry %s", path)
            return None

    def put(self, key: str, params: dict, result: dict) -> None:
        atomic_write_text(self._path(key), json.dumps({"params": params, "result": result},
                                                      sort_keys=True))


@dataclass
class SweepOutcome:
    results: list
    computed: int = 0
    cached: int = 0
    failures: list = field(default_factory=list)


def _safe_call(fn, params):
    try:
        return fn(params), None
    except Exception as exc:  # recorded per cell, never aborts the sweep
        return None, f"{type(exc).__name__}: {exc}"


def run_cells(fn: Callable[[dict], dict], cells: Sequence[dict], workers: int = 1,
              cache: Optional[CellCache] = None) -> SweepOutcome:
    name = f"{fn.__module__}.{fn.__qualname__}"
    results: list = [None] * len(cells)
    keys = [cache.key(name, c) if cache else None for c in cells]
    todo = []
    cached = 0
    for i, c in enumerate(cells):
        hit = cache.get(keys[i]) if cache else None
        if hit is not None:
            results[i] = hit
            cached += 1
        else:
            todo.append(i)

    outcome = SweepOutcome(results, cached=cached)

    def record(i, res, err):
        if err is not None:
            log.warning("cell %d %s failed: %s", i, cells[i], err)
            outcome.failures.append({"index": i, "params": cells[i], "error": err})
            return
        results[i] = res
        outcome.computed += 1
        if cache:
            cache.put(keys[i], cells[i], res)

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [(i, pool.submit(_safe_call, fn, cells[i])) for i in todo]
            for i, fut in futs:
                record(i, *fut.result())
    else:
        for i in todo:
            record(i, *_safe_call(fn, cells[i]))
    return outcome
