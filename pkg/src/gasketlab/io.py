"""CSV and JSON output.

Floats are written with ``repr`` (shortest round-trip form), lines end in
LF and the decimal separator is always ``.``, so write -> read -> write is
byte-identical.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import LevelMismatchError, ValidationError
from .gasket import Address, GasketGraph, build_graph, vertex_count


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def read_csv(path):
    """Header and rows with ints and floats parsed back."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[_parse(c) for c in row] for row in r if row]
    return header, rows


def write_field(path, g: GasketGraph, values) -> None:
    """Field CSV with columns ``vertex,i,j,value`` (lattice address at level n)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (g.n_vertices,):
        raise LevelMismatchError(f"field has {values.shape[0]} values, Γ_{g.level} has {g.n_vertices}")
    rows = [(v, int(i), int(j), values[v]) for v, (i, j) in enumerate(g.lattice)]
    write_csv(path, ("vertex", "i", "j", "value"), rows)


def read_field(path, g: GasketGraph) -> np.ndarray:
    """Values from a field CSV; rows may refer to any level at or below ``g.level``.

    Columns ``i,j`` are read at the level stated in an optional ``level``
    column, otherwise at ``g.level``.
    """
    header, rows = read_csv(path)
    cols = {name: k for k, name in enumerate(header)}
    if not {"i", "j", "value"} <= cols.keys():
        raise ValidationError(f"{path}: field CSV needs columns i, j, value")
    lvl = cols.get("level")
    if lvl is None and len(rows) != g.n_vertices:
        raise LevelMismatchError(f"{path}: {len(rows)} rows but Γ_{g.level} has {g.n_vertices} vertices")
    out = np.full(g.n_vertices, np.nan)
    for row in rows:
        n = int(row[lvl]) if lvl is not None else g.level
        v = g.index_of(Address(n, int(row[cols["i"]]), int(row[cols["j"]])).at_level(g.level))
        out[v] = float(row[cols["value"]])
    if np.isnan(out).any():
        raise ValidationError(f"{path}: field does not cover every vertex of Γ_{g.level}")
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    subcommand: str
    params: dict
    seed: int | None = None
    rng: str | None = None
    inputs: dict = field(default_factory=dict)
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    python: str = field(default_factory=platform.python_version)

    def add_input(self, path) -> None:
        if path is not None and os.path.exists(path):
            self.inputs[os.path.basename(str(path))] = sha256_file(path)

    def finish(self) -> "RunManifest":
        self.finished = _now()
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(path, manifest: RunManifest) -> None:
    write_json(path, manifest.to_dict())


def manifest_path(out_path) -> str:
    root, _ = os.path.splitext(str(out_path))
    return root + ".manifest.json"


def read_profile(path):
    """``(level, values)`` from a field CSV at a level inferred from its size.

    A ``level`` column, if present, wins; otherwise the row count must be
    ``|V_m|`` for some ``m``.
    """
    header, rows = read_csv(path)
    if "level" in header:
        m = int(rows[0][header.index("level")])
    else:
        m = next((k for k in range(0, 13) if vertex_count(k) == len(rows)), None)
        if m is None:
            raise ValidationError(f"{path}: {len(rows)} rows do not match any |V_m|")
    g = build_graph(m)
    return m, read_field(path, g)
