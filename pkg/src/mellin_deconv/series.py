"""Positive observation series and their CSV / JSON-sidecar persistence."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .errors import DomainError

__all__ = ["ObservationSeries", "write_series", "read_series", "sidecar_path"]


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Strictly positive observations ``Y_1..Y_n`` sampled every ``delta``.

    The arrays are stored read-only so a series can be shared between
    threads. ``meta`` carries provenance (generator, params, seed).
    """

    values: np.ndarray
    delta: float = 1.0
    meta: Dict[str, Any] = field(default_factory=dict)
    log_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(vals)):
            row = int(np.argmax(~np.isfinite(vals)))
            raise DomainError(f"observation {row} is not finite: {vals[row]!r}")
        if np.any(vals <= 0):
            row = int(np.argmax(vals <= 0))
            raise DomainError(f"observation {row} is not strictly positive: {float(vals[row])!r}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise DomainError(f"sampling step must be positive, got {self.delta}")
        logs = np.log(vals)
        vals.setflags(write=False)
        logs.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "log_values", logs)
        object.__setattr__(self, "delta", float(self.delta))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n(self) -> int:
        return len(self.values)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_series(series: ObservationSeries, path) -> Path:
    """Write ``value`` CSV plus a JSON sidecar ``{n, delta, seed, generator, params}``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value"])
        for v in series.values:
            writer.writerow([repr(float(v))])
    meta = {
        "n": series.n,
        "delta": series.delta,
        "seed": series.meta.get("seed"),
        "generator": series.meta.get("generator"),
        "params": series.meta.get("params", {}),
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_series(path, delta: Optional[float] = None) -> ObservationSeries:
    """Read a single-column ``value`` CSV; the sidecar is used when present.

    Raises
    ------
    DomainError
        On a missing header, an unparsable row, or a nonpositive value; the
        message names the 1-based data row.
    """
    path = Path(path)
    values = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["value"]:
            raise DomainError(f"{path}: expected header 'value', got {header!r}")
        for row_no, row in enumerate(reader, start=1):
            if not row or not row[0].strip():
                continue
            try:
                v = float(row[0])
            except ValueError:
                raise DomainError(f"{path}: row {row_no}: cannot parse {row[0]!r}") from None
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{path}: row {row_no}: value {v!r} is not strictly positive")
            values.append(v)
    if not values:
        raise DomainError(f"{path}: no observations")
    meta: Dict[str, Any] = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        if delta is None:
            delta = meta.get("delta")
    return ObservationSeries(np.array(values), delta=delta or 1.0, meta=meta)
