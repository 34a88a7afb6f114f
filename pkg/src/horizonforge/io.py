"""Profile documents and run configurations.

Documents are JSON objects with a fixed key set; numbers are written with 17
significant digits so that a write/read cycle reproduces every finite double
bit for bit.  Non-finite values are rejected on both sides.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geomcore import RadialGrid, WarpedMetric

SCHEMA_VERSION = 1
KINDS = ("warped_closed", "tube_profile", "phase_plane", "collar", "trajectory")
_DOC_KEYS = {"schema_version", "kind", "n", "grid", "values", "metadata", "columns"}
_REQUIRED = _DOC_KEYS - {"metadata", "columns"}
_GRID_KEYS = {"a", "b", "points"}


class DocumentError(ValueError):
    """Malformed document or configuration; ``key`` names the offending field."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def format_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise DocumentError(f"non-finite number {v!r} cannot be written")
    if v == 0 and math.copysign(1.0, v) < 0:
        return "-0.0"
    return f"{v:.17g}"


def dumps(obj, indent: int | None = None, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    pad = "" if indent is None else "\n" + " " * (indent * (_level + 1))
    end = "" if indent is None else "\n" + " " * (indent * _level)
    sep = ", " if indent is None else ","
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_, int, float, np.integer, np.floating)):
        return format_number(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in seq):
            return "[" + ", ".join(format_number(v) for v in seq) + "]"
        return "[" + sep.join(f"{pad}{dumps(v, indent, _level + 1)}" for v in seq) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite_array(name, raw) -> np.ndarray:
    if not isinstance(raw, list):
        raise DocumentError(f"{name} must be an array of numbers", name)
    out = np.empty(len(raw))
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise DocumentError(f"{name}[{i}] is not a number", name)
        if not math.isfinite(v):
            raise DocumentError(f"{name}[{i}] is not finite ({v!r})", f"{name}[{i}]")
        out[i] = v
    return out


@dataclass(eq=False)
class ProfileDocument:
    kind: str
    n: int
    grid: RadialGrid
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    columns: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DocumentError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}", "kind")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.points,):
            raise DocumentError(f"values has {self.values.size} entries, grid has {self.grid.points} points",
                                "values")
        for name, arr in [("values", self.values)] + [(f"columns.{k}", v) for k, v in self.columns.items()]:
            bad = np.flatnonzero(~np.isfinite(np.asarray(arr, float)))
            if bad.size:
                raise DocumentError(f"{name}[{bad[0]}] is not finite", f"{name}[{bad[0]}]")
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        for k, v in self.columns.items():
            if v.shape != self.values.shape:
                raise DocumentError(f"column {k!r} has the wrong length", f"columns.{k}")
        if not all(isinstance(k, str) and isinstance(v, str) for k, v in self.metadata.items()):
            raise DocumentError("metadata must map strings to strings", "metadata")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "n": int(self.n),
            "grid": {"a": float(self.grid.a), "b": float(self.grid.b), "points": int(self.grid.points)},
            "values": self.values,
            "metadata": dict(self.metadata),
            "columns": {k: v for k, v in self.columns.items()},
        }

    def __eq__(self, other):
        if not isinstance(other, ProfileDocument):
            return NotImplemented
        return (self.kind == other.kind and self.n == other.n and self.grid == other.grid
                and self.schema_version == other.schema_version and self.metadata == other.metadata
                and np.array_equal(self.values, other.values)
                and self.columns.keys() == other.columns.keys()
                and all(np.array_equal(self.columns[k], other.columns[k]) for k in self.columns))

    # conversions ---------------------------------------------------------

    def to_metric(self) -> WarpedMetric:
        if self.kind == "warped_closed":
            return WarpedMetric("closed_sphere", self.n, self.grid, self.values, True, self.columns.get("radial"))
        if self.kind == "tube_profile":
            return WarpedMetric("tube", self.n, self.grid, self.values)
        raise DocumentError(f"a {self.kind} document does not describe a metric", "kind")

    @classmethod
    def from_metric(cls, m: WarpedMetric, metadata: dict | None = None) -> "ProfileDocument":
        kind = "warped_closed" if m.kind == "closed_sphere" else "tube_profile"
        cols = {} if m.radial is None else {"radial": m.radial}
        return cls(kind, m.n, m.grid, m.profile, dict(metadata or {}), cols)

    def to_planar(self):
        from .schwarzschild import PlanarProfile

        if self.kind != "phase_plane":
            raise DocumentError("expected a phase_plane document", "kind")
        x = self.columns.get("x", self.grid.samples)
        dC = self.columns.get("dC", np.zeros_like(self.values))
        return PlanarProfile(x, self.values, self.n, dC)

    @classmethod
    def from_planar(cls, p, metadata: dict | None = None) -> "ProfileDocument":
        grid = RadialGrid(float(p.x[0]), float(p.x[-1]), int(p.x.size))
        return cls("phase_plane", p.n, grid, p.y, dict(metadata or {}), {"x": p.x, "dC": p.dC})


def serialize(doc: ProfileDocument) -> bytes:
    return (dumps(doc.to_dict(), indent=1) + "\n").encode("utf-8")


def deserialize(data) -> ProfileDocument:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else str(data)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DocumentError("a document must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DocumentError(f"unsupported schema_version {version!r} (this build reads version {SCHEMA_VERSION})",
                            "schema_version")
    for key in raw:
        if key not in _DOC_KEYS:
            raise DocumentError(f"unknown key {key!r}", key)
    for key in _REQUIRED:
        if key not in raw:
            raise DocumentError(f"missing key {key!r}", key)
    g = raw["grid"]
    if not isinstance(g, dict) or set(g) != _GRID_KEYS:
        raise DocumentError("grid must hold exactly a, b and points", "grid")
    if not isinstance(raw["n"], int) or isinstance(raw["n"], bool):
        raise DocumentError("n must be an integer", "n")
    if not isinstance(g["points"], int):
        raise DocumentError("grid.points must be an integer", "grid.points")
    try:
        grid = RadialGrid(float(g["a"]), float(g["b"]), g["points"])
    except ValueError as exc:
        raise DocumentError(str(exc), "grid") from exc
    values = _finite_array("values", raw["values"])
    cols = raw.get("columns", {})
    if not isinstance(cols, dict):
        raise DocumentError("columns must be an object", "columns")
    columns = {k: _finite_array(f"columns.{k}", v) for k, v in cols.items()}
    meta = raw.get("metadata", {})
    if not isinstance(meta, dict):
        raise DocumentError("metadata must be an object", "metadata")
    return ProfileDocument(raw["kind"], raw["n"], grid, values, meta, columns, version)


def read_document(path) -> ProfileDocument:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def write_document(doc: ProfileDocument, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(doc))


# run configuration -------------------------------------------------------

_CONFIG_KEYS = {"command", "tolerances", "grid", "outputs", "params"}


@dataclass(frozen=True)
class RunConfig:
    command: str
    tolerances: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def parse_config(raw, commands) -> RunConfig:
    """Strict parse: unknown keys anywhere in the fixed schema are rejected."""
    from .config import Tolerances

    if not isinstance(raw, dict):
        raise DocumentError("config must be a JSON object")
    for key in raw:
        if key not in _CONFIG_KEYS:
            raise DocumentError(f"unknown config key {key!r}", key)
    if raw.get("command") not in commands:
        raise DocumentError(f"unknown command {raw.get('command')!r}", "command")
    tol = raw.get("tolerances", {})
    known = set(Tolerances().as_dict())
    for key in tol:
        if key not in known:
            raise DocumentError(f"unknown tolerance {key!r}", f"tolerances.{key}")
    grid = raw.get("grid", {})
    for key in grid:
        if key != "points":
            raise DocumentError(f"unknown grid key {key!r}", f"grid.{key}")
    for name in ("outputs", "params"):
        if not isinstance(raw.get(name, {}), dict):
            raise DocumentError(f"{name} must be an object", name)
    return RunConfig(raw["command"], dict(tol), dict(grid), dict(raw.get("outputs", {})),
                     dict(raw.get("params", {})))
