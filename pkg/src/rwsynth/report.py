"""Whack-a-mole detection, topcoding baseline and run reports."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np

from .data_model import Dataset
from .risk import RiskVector

DEFAULT_THRESHOLD = 0.25
THRESHOLD_GRID = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5)


class ReportError(OSError):
    """The report could not be written."""


@dataclass(frozen=True)
class WhackAMoleReport:
    threshold: float
    flagged: tuple[tuple[int, float, float, float], ...]
    counts_above: dict = field(default_factory=dict)
    decrease_share: float = 0.0
    increase_share: float = 0.0

    @property
    def n_flagged(self) -> int:
        return len(self.flagged)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "n_flagged": self.n_flagged,
            "flagged": [
                {"id": i, "base_risk": b, "new_risk": w, "delta": d} for i, b, w, d in self.flagged
            ],
            "counts_above": {f"{t:g}": c for t, c in self.counts_above.items()},
            "decrease_share": self.decrease_share,
            "increase_share": self.increase_share,
        }


def _values(rv) -> np.ndarray:
    return rv.values if isinstance(rv, RiskVector) else np.asarray(rv, dtype=float)


def whack_a_mole(base, weighted, threshold: float = DEFAULT_THRESHOLD,
                 grid: Sequence[float] = THRESHOLD_GRID) -> WhackAMoleReport:
    """Records whose risk rose by at least ``threshold`` from ``base`` to ``weighted``."""
    b, w = _values(base), _values(weighted)
    if b.shape != w.shape:
        raise ValueError(f"risk vectors differ in length: {b.size} vs {w.size}")
    delta = w - b
    hit = np.flatnonzero(delta >= threshold)
    flagged = tuple((int(i), float(b[i]), float(w[i]), float(delta[i])) for i in hit)
    counts = {float(t): int(np.count_nonzero(delta >= t)) for t in grid}
    return WhackAMoleReport(
        float(threshold), flagged, counts,
        decrease_share=float(np.mean(w < b)),
        increase_share=float(np.mean(w > b)),
    )


def topcode_value(y, quantile: float = 0.94) -> float:
    if not 0.0 < quantile < 1.0:
        raise ValueError("topcoding quantile must lie in (0, 1)")
    return float(np.quantile(np.asarray(y, dtype=float), quantile))


def topcode(ds: Dataset, quantile: float = 0.94, value: float | None = None) -> Dataset:
    """Censor sensitive values above the empirical ``quantile`` (or a given value) to it."""
    q = topcode_value(ds.y, quantile) if value is None else float(value)
    return ds.with_y(np.minimum(ds.y, q))


def report_schema() -> dict:
    return json.loads(resources.files("rwsynth").joinpath("report.schema.json").read_text())


def validate_report(report: Mapping) -> None:
    jsonschema.validate(report, report_schema())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def emit_report(outdir, report: Mapping, tables: Mapping[str, Mapping[str, Sequence]] | None = None) -> Path:
    """Validate and write ``report.json`` plus one CSV per per-record table.

    Each table maps column name -> per-record values and is written as
    ``<name>.csv`` with a leading ``id`` column.
    """
    outdir = Path(outdir)
    doc = _jsonable(dict(report))
    validate_report(doc)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        path = outdir / "report.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        for name, cols in (tables or {}).items():
            write_table(outdir / f"{name}.csv", cols)
    except OSError as e:
        raise ReportError(f"cannot write report to {outdir}: {e}") from e
    return path


def write_table(path, cols: Mapping[str, Sequence]) -> None:
    """Per-record CSV: ``id`` (0-based row) then one column per entry."""
    names = list(cols)
    n = len(cols[names[0]])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *names])
        for i in range(n):
            w.writerow([i, *(_cell(cols[k][i]) for k in names)])


def read_table(path) -> dict[str, np.ndarray]:
    """Inverse of :func:`write_table` for numeric columns."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty table")
    ids = [int(r["id"]) for r in rows]
    if ids != list(range(len(ids))):
        raise ValueError(f"{path}: ids must be 0..n-1 in order")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0] if k != "id"}


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v
