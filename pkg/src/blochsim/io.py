"""Self-describing CSV/JSON artifacts.

Every CSV starts with one comment line ``# blochsim {json}`` carrying the
envelope (schema version, build id, command and the full configuration), so a
file can be re-run from its own header.  Numbers are written with 17
significant digits, which round-trips float64 exactly.  Timing information is
kept out of CSV headers so that data files are byte-identical across runs.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from . import __version__
from .sweep import atomic_write_text, code_version

__all__ = ["SCHEMA_VERSION", "build_id", "make_envelope", "write_csv", "write_json",
           "read_envelope", "read_csv", "read_json"]

SCHEMA_VERSION = 1
_PREFIX = "# blochsim "


def build_id() -> str:
    return f"blochsim {__version__}+src.{code_version()}"


def make_envelope(command: str, config: Mapping, **extra) -> dict:
    env = {"schema_version": SCHEMA_VERSION, "build_id": build_id(), "command": command,
           "config": _jsonable(config)}
    env.update(_jsonable(extra))
    return env


def _jsonable(x):
    if isinstance(x, Mapping):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_csv(path, columns: Mapping[str, object], envelope: Mapping) -> Path:
    """Write equal-length columns with the envelope header line."""
    path = Path(path)
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    lengths = {c.shape[0] for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns differ in length: {sorted(lengths)}")
    lines = [_PREFIX + json.dumps(_jsonable(envelope), sort_keys=True), ",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def write_json(path, envelope: Mapping, payload: Optional[Mapping] = None) -> Path:
    path = Path(path)
    doc = {"envelope": _jsonable(envelope), "payload": _jsonable(payload or {})}
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return path


def read_envelope(path) -> dict:
    path = Path(path)
    if path.suffix == ".json":
        return read_json(path)["envelope"]
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith(_PREFIX):
        raise ValueError(f"{path} has no blochsim header")
    return json.loads(first[len(_PREFIX):])


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def read_csv(path) -> tuple[dict, dict]:
    """Returns ``(envelope, columns)`` with numeric columns as float arrays."""
    env = read_envelope(path)
    with open(path) as fh:
        fh.readline()
        names = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    cols = {}
    for j, n in enumerate(names):
        raw = [r[j] for r in rows]
        try:
            cols[n] = np.array([float(v) for v in raw])
        except ValueError:
            cols[n] = np.array(raw)
    return env, cols
