"""Central tolerance record.

Every numeric threshold used by more than one module lives here.  The
environment variable ``HORIZONFORGE_TOL`` may hold a JSON object whose keys
override individual fields, e.g. ``{"membership": 1e-6}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace

ENV_VAR = "HORIZONFORGE_TOL"


@dataclass(frozen=True)
class Tolerances:
    eig_residual: float = 1e-10
    membership: float = 1e-8
    eig_max_iter: int = 200
    closure: float = 1e-5
    volume_drift: float = 1e-8
    orbit_drift: float = 1e-9
    min_points: int = 8
    default_points: int = 2048
    curvature_blowup: float = 1e6

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(name: str, value):
    kinds = {f.name: f.type for f in fields(Tolerances)}
    if name not in kinds:
        raise KeyError(name)
    if kinds[name] in ("int", int):
        return int(value)
    return float(value)


def with_overrides(base: Tolerances, overrides: dict) -> Tolerances:
    """Return ``base`` with ``overrides`` applied; unknown keys raise KeyError."""
    clean = {k: _coerce(k, v) for k, v in overrides.items()}
    return replace(base, **clean)


def tolerances() -> Tolerances:
    """Defaults plus any override found in ``HORIZONFORGE_TOL``."""
    raw = os.environ.get(ENV_VAR)
    if not raw:
        return Tolerances()
    data = json.loads(raw)
    if not isinstance(data, dict):
        raise ValueError(f"{ENV_VAR} must hold a JSON object")
    return with_overrides(Tolerances(), data)
