"""Turn identification risks into per-record likelihood exponents."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import PatternIndex
from .risk import PairRiskMap, RiskVector, SingletonPatternError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightVector:
    """Weights in [0, 1] with a provenance tag.

    ``provenance`` is one of ``unit``, ``marginal``, ``pairwise`` or
    ``adjusted``; adjusted vectors carry ``c``, ``g`` and the ``base`` tag.
    ``floored`` lists records lifted to the weight floor and ``clamped_low``
    records whose adjusted value fell below 0.
    """

    values: np.ndarray
    provenance: str
    base: str | None = None
    c: float = 1.0
    g: float = 0.0
    floor: float = 0.0
    floored: tuple[int, ...] = ()
    clamped_low: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ValueError("weights must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def tag(self) -> str:
        if self.provenance == "adjusted":
            return f"adjusted(c={self.c!r},g={self.g!r},base={self.base})"
        return self.provenance


def unit_weights(n: int) -> WeightVector:
    return WeightVector(np.ones(n), "unit")


def _apply_floor(values: np.ndarray, floor: float, singletons: Sequence[int]):
    if not 0.0 <= floor < 1.0:
        raise ValueError("weight_floor must lie in [0, 1)")
    values = values.copy()
    singletons = np.asarray(singletons, dtype=np.int64)
    values[singletons] = floor
    lifted = np.flatnonzero(values < floor)
    values[lifted] = floor
    floored = tuple(sorted(set(int(i) for i in singletons) | set(int(i) for i in lifted)))
    if floored:
        log.info("weight floor %.3g applied to %d record(s)", floor, len(floored))
    return values, floored


def marginal_weights(rv: RiskVector, weight_floor: float = 0.0) -> WeightVector:
    """``1 - risk`` per record; singleton records (if any) get the floor."""
    if rv.context != "confidential":
        raise ValueError("weights are built from confidential-data risks")
    vals, floored = _apply_floor(1.0 - rv.values, weight_floor, rv.singletons)
    return WeightVector(vals, "marginal", floor=weight_floor, floored=floored)


def pairwise_weights(
    pm: PairRiskMap,
    idx: PatternIndex | None = None,
    singleton_policy: str = "error",
    weight_floor: float = 0.0,
) -> WeightVector:
    """One minus the mean joint risk of a record with each pattern-mate."""
    idx = pm.index if idx is None else idx
    if idx is not pm.index and idx.n != pm.index.n:
        raise ValueError("pattern index does not match the pair-risk map")
    singles = idx.singletons()
    if singles and singleton_policy != "floor":
        raise SingletonPatternError(
            f"{len(singles)} singleton pattern(s): pairwise weights undefined"
        )
    return pairwise_weights_from_mean(mean_pair_risk(pm, idx), singles, weight_floor)


def mean_pair_risk(pm: PairRiskMap, idx: PatternIndex | None = None) -> np.ndarray:
    """Mean joint risk of each record with its pattern-mates (0 for singletons)."""
    idx = pm.index if idx is None else idx
    mates = idx.sizes_per_record() - 1
    out = np.zeros(idx.n)
    ok = mates > 0
    out[ok] = pm.row_sums()[ok] / mates[ok]
    return out


def pairwise_weights_from_mean(mean_risk, singletons: Sequence[int] = (),
                               weight_floor: float = 0.0) -> WeightVector:
    """Pairwise weights from stored mean pair risks (see :func:`mean_pair_risk`)."""
    vals = np.clip(1.0 - np.asarray(mean_risk, dtype=float), 0.0, 1.0)
    vals, floored = _apply_floor(vals, weight_floor, singletons)
    return WeightVector(vals, "pairwise", floor=weight_floor, floored=floored)


def pairwise_weights_averaged(pm: PairRiskMap) -> np.ndarray:
    """Same quantity via the mean of pair weights ``1 - IR_ij`` (reference form)."""
    idx = pm.index
    out = np.ones(idx.n)
    for g, blk in zip(idx.groups, pm.blocks):
        m = g.size
        if m < 2:
            continue
        pair_w = 1.0 - blk
        np.fill_diagonal(pair_w, 0.0)
        out[g] = pair_w.sum(axis=1) / (m - 1)
    return out


def adjust_weights(wv: WeightVector, c: float = 1.0, g: float = 0.0) -> WeightVector:
    """Scale by ``c``, shift by ``g`` and clamp to [0, 1]."""
    if c < 0:
        raise ValueError("scale c must be >= 0")
    raw = c * wv.values + g
    low = tuple(int(i) for i in np.flatnonzero(raw < 0))
    if low:
        log.warning("lower clamp at 0 engaged for %d record(s)", len(low))
    base = wv.base if wv.provenance == "adjusted" else wv.provenance
    return WeightVector(
        np.clip(raw, 0.0, 1.0), "adjusted", base=base, c=float(c), g=float(g),
        floor=wv.floor, floored=wv.floored, clamped_low=low,
    )


def write_weights(path, wv: WeightVector) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "weight", "provenance"])
        for i, v in enumerate(wv.values):
            w.writerow([i, repr(float(v)), wv.tag])


def read_weights(path) -> WeightVector:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no weight rows")
    ids = [int(r["id"]) for r in rows]
    if ids != list(range(len(ids))):
        raise ValueError(f"{path}: ids must be 0..n-1 in order")
    tag = rows[0]["provenance"]
    vals = np.array([float(r["weight"]) for r in rows])
    if tag.startswith("adjusted("):
        parts = dict(p.split("=", 1) for p in tag[len("adjusted("):-1].split(","))
        return WeightVector(vals, "adjusted", base=parts["base"], c=float(parts["c"]), g=float(parts["g"]))
    return WeightVector(vals, tag)
