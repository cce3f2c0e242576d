"""Identification-risk probabilities on confidential and synthetic data.

The intruder knows each record's pattern (the joint value of a few
unsynthesized categorical variables) and its true sensitive value. A record
is at risk when few records of its pattern carry values close to that truth.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .data_model import BallConfig, Dataset, PatternIndex, outside_matrix

SINGLETON_POLICIES = ("error", "floor")
QUANTILE_GRID = tuple(round(k / 100, 2) for k in range(1, 100))


class SingletonPatternError(ValueError):
    """Raised when a pattern holds one record and no fallback is configured."""


@dataclass(frozen=True)
class RiskVector:
    values: np.ndarray
    context: str
    numerators: np.ndarray | None = field(default=None, repr=False)
    denominators: np.ndarray | None = field(default=None, repr=False)
    singletons: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("risk values must be one-dimensional")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("risk values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def as_fractions(self) -> list[Fraction]:
        """Exact risks (only for directly computed vectors)."""
        if self.numerators is None:
            raise ValueError("exact counts are not available for averaged risks")
        return [Fraction(int(a), int(b)) for a, b in zip(self.numerators, self.denominators)]


def _check_singletons(idx: PatternIndex, policy: str) -> tuple[int, ...]:
    if policy not in SINGLETON_POLICIES:
        raise ValueError(f"unknown singleton policy {policy!r}")
    singles = idx.singletons()
    if singles and policy == "error":
        keys = [idx.keys[idx.membership[i]] for i in singles]
        raise SingletonPatternError(
            f"{len(singles)} singleton pattern(s) {keys[:10]} over {idx.pattern_vars}; "
            "set singleton_policy='floor' to assign them the weight floor"
        )
    return tuple(singles)


def marginal_risk_confidential(
    ds: Dataset, idx: PatternIndex, cfg: BallConfig, singleton_policy: str = "error"
) -> RiskVector:
    """Share of a record's pattern-mates whose true values fall outside its ball."""
    singles = _check_singletons(idx, singleton_policy)
    num = np.zeros(ds.n, dtype=np.int64)
    den = idx.sizes_per_record().astype(np.int64)
    for g in idx.groups:
        out = outside_matrix(ds.y[g], ds.y[g], cfg)
        num[g] = out.sum(axis=1)
    return RiskVector(num / den, "confidential", num, den, singles)


def _check_compatible(conf: Dataset, syn: Dataset, idx: PatternIndex) -> None:
    if conf.n != syn.n:
        raise ValueError(f"record count mismatch: {conf.n} vs {syn.n}")
    if idx.n != conf.n:
        raise ValueError("pattern index was built on a different dataset")
    for v in idx.pattern_vars:
        if v not in syn.codes or not np.array_equal(conf.codes[v], syn.codes[v]):
            raise ValueError(f"pattern column {v!r} differs between confidential and synthetic data")


def marginal_risk_synthetic(
    conf: Dataset, syn: Dataset, idx: PatternIndex, cfg: BallConfig
) -> RiskVector:
    """Risk of record ``i`` in one released dataset.

    Balls are centred on confidential truths and membership is tested on the
    synthetic values. The count is zeroed when the record's own synthetic
    value is not inside its ball.
    """
    _check_compatible(conf, syn, idx)
    num = np.zeros(conf.n, dtype=np.int64)
    den = idx.sizes_per_record().astype(np.int64)
    for g in idx.groups:
        out = outside_matrix(conf.y[g], syn.y[g], cfg)
        own_close = ~np.diagonal(out)
        num[g] = out.sum(axis=1) * own_close
    return RiskVector(num / den, "synthetic", num, den)


def average_risks(per_dataset: Sequence[RiskVector]) -> RiskVector:
    if not per_dataset:
        raise ValueError("no risk vectors to average")
    n = len(per_dataset[0])
    for rv in per_dataset:
        if len(rv) != n:
            raise ValueError("risk vectors differ in length")
        if rv.context != "synthetic":
            raise ValueError("only synthetic-data risks are averaged")
    stacked = np.vstack([rv.values for rv in per_dataset])
    return RiskVector(stacked.mean(axis=0), "averaged")


@dataclass(frozen=True)
class PairRiskMap:
    """Joint risks for same-pattern pairs; cross-pattern pairs are 0.

    ``blocks[k][a, b]`` is the joint risk of the ``a``-th and ``b``-th member
    of group ``k`` (diagonal holds the marginal risk and is never used).
    """

    index: PatternIndex
    blocks: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        pos = np.empty(self.index.n, dtype=np.int64)
        for g in self.index.groups:
            pos[g] = np.arange(g.size)
        object.__setattr__(self, "_pos", pos)

    def get(self, i: int, j: int) -> float:
        k = self.index.membership[i]
        if k != self.index.membership[j]:
            return 0.0
        return float(self.blocks[k][self._pos[i], self._pos[j]])

    def entries(self) -> Iterator[tuple[tuple[int, int], float]]:
        for g, blk in zip(self.index.groups, self.blocks):
            a, b = np.triu_indices(g.size, k=1)
            for u, v, val in zip(g[a], g[b], blk[a, b]):
                yield (int(u), int(v)), float(val)

    def row_sums(self) -> np.ndarray:
        """Per record, the sum of joint risks with every other pattern-mate."""
        out = np.zeros(self.index.n)
        for g, blk in zip(self.index.groups, self.blocks):
            out[g] = blk.sum(axis=1) - np.diagonal(blk)
        return out


def _pair_block(y: np.ndarray, cfg: BallConfig) -> np.ndarray:
    out = outside_matrix(y, y, cfg).astype(np.float64)
    # counts are integers < 2**53 so the float product is exact
    return (out @ out.T) / y.size


def pairwise_risk_confidential(
    ds: Dataset,
    idx: PatternIndex,
    cfg: BallConfig,
    singleton_policy: str = "error",
    n_jobs: int = 1,
) -> PairRiskMap:
    """Share of pattern members outside both balls, for every same-pattern pair.

    Cost is one ``|M| x |M|`` Boolean matrix and one matrix product per
    pattern; patterns are processed independently and in a fixed order.
    """
    _check_singletons(idx, singleton_policy)
    ys = [ds.y[g] for g in idx.groups]
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            blocks = list(ex.map(lambda y: _pair_block(y, cfg), ys))
    else:
        blocks = [_pair_block(y, cfg) for y in ys]
    for b in blocks:
        b.setflags(write=False)
    return PairRiskMap(idx, tuple(blocks))


@dataclass(frozen=True)
class RiskSummary:
    mean: float
    median: float
    iqr: float
    max: float
    quantiles: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "median": self.median,
            "iqr": self.iqr,
            "max": self.max,
            "quantiles": {f"{q:.2f}": v for q, v in zip(QUANTILE_GRID, self.quantiles)},
        }


def risk_summary(rv: RiskVector | np.ndarray) -> RiskSummary:
    v = rv.values if isinstance(rv, RiskVector) else np.asarray(rv, dtype=float)
    if v.size == 0:
        raise ValueError("empty risk vector")
    q = np.quantile(v, QUANTILE_GRID)
    q25, q50, q75 = np.quantile(v, [0.25, 0.5, 0.75])
    return RiskSummary(
        mean=float(v.mean()),
        median=float(q50),
        iqr=float(q75 - q25),
        max=float(v.max()),
        quantiles=tuple(float(x) for x in q),
    )


def write_risks(path, risks: dict[str, RiskVector]) -> None:
    """CSV with an ``id`` column and one column per named risk vector."""
    names = list(risks)
    n = len(risks[names[0]])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *names])
        for i in range(n):
            w.writerow([i, *(repr(float(risks[k].values[i])) for k in names)])


def read_risks(path, column: str = "risk", context: str = "confidential") -> RiskVector:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no risk rows")
    if column not in rows[0]:
        raise ValueError(f"{path}: no column {column!r}")
    ids = [int(r["id"]) for r in rows]
    if ids != list(range(len(ids))):
        raise ValueError(f"{path}: ids must be 0..n-1 in order")
    return RiskVector(np.array([float(r[column]) for r in rows]), context)
