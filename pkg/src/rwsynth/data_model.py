"""Typed microdata tables, pattern indexing and the closeness ball.

A :class:`Dataset` is stored column-wise: categorical columns hold integer
level codes (index into the declared level list), the single sensitive column
holds floats. Record ids are the row positions ``0..n-1``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

ROLES = ("id", "pattern", "predictor", "sensitive")
KINDS = ("categorical", "continuous")
NEGATIVE_CENTER_POLICIES = ("absolute_radius", "reject")


class DataError(ValueError):
    """Raised for malformed input tables or schema violations."""


@dataclass(frozen=True)
class Column:
    name: str
    role: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise DataError(f"column {self.name!r}: categorical needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"column {self.name!r}: duplicate levels")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))

    def to_dict(self) -> dict:
        d = {"name": self.name, "role": self.role, "kind": self.kind}
        if self.kind == "categorical":
            d["levels"] = list(self.levels)
        return d


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")
        sens = [c for c in self.columns if c.role == "sensitive"]
        if len(sens) != 1:
            raise DataError(f"schema needs exactly one sensitive column, got {len(sens)}")
        if sens[0].kind != "continuous":
            raise DataError("sensitive column must be continuous")
        if not any(c.role == "pattern" for c in self.columns):
            raise DataError("schema needs at least one pattern column")
        for c in self.columns:
            if c.role in ("pattern", "predictor") and c.kind != "categorical":
                raise DataError(f"column {c.name!r}: {c.role} columns must be categorical")

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        try:
            cols = d["columns"]
        except (KeyError, TypeError):
            raise DataError("schema document needs a 'columns' list") from None
        out = []
        for k, c in enumerate(cols):
            try:
                out.append(Column(c["name"], c["role"], c["kind"], tuple(c.get("levels", ()))))
            except KeyError as e:
                raise DataError(f"columns[{k}]: missing field {e.args[0]!r}") from None
        return cls(tuple(out))

    def to_dict(self) -> dict:
        return {"columns": [c.to_dict() for c in self.columns]}

    def __getitem__(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    @property
    def sensitive(self) -> Column:
        return next(c for c in self.columns if c.role == "sensitive")

    @property
    def id_column(self) -> Column | None:
        return next((c for c in self.columns if c.role == "id"), None)

    @property
    def categorical(self) -> list[Column]:
        return [c for c in self.columns if c.kind == "categorical"]

    @property
    def pattern_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.role == "pattern"]


class Record(NamedTuple):
    id: int
    codes: tuple[int, ...]
    y: float


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable microdata table.

    Parameters
    ----------
    schema : Schema
    codes : dict of column name -> int array
        Level codes of every categorical column.
    y : array of float
        Sensitive values in natural units.
    labels : sequence of str, optional
        Raw values of the id column, kept only for round-tripping.
    """

    def __init__(self, schema: Schema, codes: dict, y, labels: Sequence[str] | None = None):
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise DataError("empty table")
        if not np.all(np.isfinite(y)):
            raise DataError("sensitive values must be finite")
        self.schema = schema
        self.y = _frozen(y)
        self.codes = {}
        for col in schema.categorical:
            if col.name not in codes:
                raise DataError(f"missing codes for column {col.name!r}")
            c = np.asarray(codes[col.name], dtype=np.int64)
            if c.shape != y.shape:
                raise DataError(f"column {col.name!r}: length mismatch")
            if c.size and (c.min() < 0 or c.max() >= len(col.levels)):
                raise DataError(f"column {col.name!r}: code out of level range")
            self.codes[col.name] = _frozen(c)
        if labels is not None:
            labels = tuple(str(v) for v in labels)
            if len(labels) != y.size:
                raise DataError("id labels length mismatch")
        self.labels = labels

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    def with_y(self, y_new) -> "Dataset":
        """Copy with the sensitive column replaced (partial synthesis)."""
        y_new = np.asarray(y_new, dtype=float)
        if y_new.shape != self.y.shape:
            raise DataError("replacement sensitive column has wrong length")
        return Dataset(self.schema, self.codes, y_new, self.labels)

    def level_labels(self, name: str) -> np.ndarray:
        col = self.schema[name]
        return np.asarray(col.levels, dtype=object)[self.codes[name]]

    def records(self) -> Iterator[Record]:
        names = [c.name for c in self.schema.categorical]
        for i in range(self.n):
            yield Record(i, tuple(int(self.codes[k][i]) for k in names), float(self.y[i]))

    def same_nonsensitive(self, other: "Dataset") -> bool:
        if self.n != other.n or self.labels != other.labels:
            return False
        return all(np.array_equal(self.codes[k], other.codes.get(k)) for k in self.codes)

    def __repr__(self):
        return f"Dataset(n={self.n}, columns={[c.name for c in self.schema.columns]})"


def load_dataset(path, schema: Schema, delimiter: str = ",") -> Dataset:
    """Read a delimited text file with a header row into a :class:`Dataset`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty table") from None
        pos = {}
        for col in schema.columns:
            if col.name not in header:
                raise DataError(f"{path}: missing column {col.name!r}")
            pos[col.name] = header.index(col.name)
        lookup = {c.name: {lv: k for k, lv in enumerate(c.levels)} for c in schema.categorical}
        sens = schema.sensitive.name
        idc = schema.id_column
        codes = {k: [] for k in lookup}
        y, labels = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) < len(header):
                raise DataError(f"{path}: row {row_no}: expected {len(header)} fields, got {len(row)}")
            for name, table in lookup.items():
                cell = row[pos[name]].strip()
                if cell not in table:
                    raise DataError(f"{path}: row {row_no}, column {name}: unknown level {cell!r}")
                codes[name].append(table[cell])
            cell = row[pos[sens]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {row_no}, column {sens}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {row_no}, column {sens}: non-finite value {cell!r}")
            y.append(v)
            if idc is not None:
                labels.append(row[pos[idc.name]].strip())
    if not y:
        raise DataError(f"{path}: empty table")
    return Dataset(schema, codes, y, labels if idc is not None else None)


def format_value(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_dataset(ds: Dataset, path, delimiter: str = ",") -> None:
    """Write ``ds`` in schema column order; inverse of :func:`load_dataset`."""
    cols = ds.schema.columns
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow([c.name for c in cols])
        lv = {c.name: c.levels for c in ds.schema.categorical}
        for i in range(ds.n):
            row = []
            for c in cols:
                if c.role == "id":
                    row.append(ds.labels[i] if ds.labels is not None else str(i))
                elif c.role == "sensitive":
                    row.append(format_value(ds.y[i]))
                else:
                    row.append(lv[c.name][ds.codes[c.name][i]])
            w.writerow(row)


@dataclass(frozen=True)
class PatternIndex:
    """Partition of record ids by the joint value of intruder-known variables.

    ``membership[i]`` is the position of record ``i``'s group in ``keys`` /
    ``groups``; each group lists its member ids in ascending order and
    includes the record itself.
    """

    pattern_vars: tuple[str, ...]
    keys: tuple[tuple[int, ...], ...]
    groups: tuple[np.ndarray, ...]
    membership: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.membership.size)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups])

    def group_of(self, i: int) -> np.ndarray:
        return self.groups[self.membership[i]]

    def group_by_key(self) -> dict:
        return dict(zip(self.keys, self.groups))

    def singletons(self) -> list[int]:
        """Ids of records that are alone in their pattern."""
        return [int(g[0]) for g in self.groups if g.size == 1]

    def sizes_per_record(self) -> np.ndarray:
        return self.sizes[self.membership]


def build_pattern_index(ds: Dataset, pattern_vars: Sequence[str]) -> PatternIndex:
    pattern_vars = tuple(pattern_vars)
    if not pattern_vars:
        raise DataError("at least one pattern variable is required")
    for v in pattern_vars:
        if v not in ds.schema:
            raise DataError(f"pattern variable {v!r} not in schema")
        if ds.schema[v].kind != "categorical":
            raise DataError(f"pattern variable {v!r} is not categorical")
    keys = np.column_stack([ds.codes[v] for v in pattern_vars])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.cumsum(np.bincount(inverse, minlength=len(uniq)))[:-1]
    groups = tuple(_frozen(g) for g in np.split(order, bounds))
    idx = PatternIndex(
        pattern_vars,
        tuple(tuple(int(v) for v in row) for row in uniq),
        groups,
        _frozen(inverse.astype(np.int64)),
    )
    _check_partition(idx)
    return idx


def _check_partition(idx: PatternIndex) -> None:
    allids = np.concatenate(idx.groups)
    if allids.size != idx.n or not np.array_equal(np.sort(allids), np.arange(idx.n)):
        raise AssertionError("pattern groups do not partition the records")
    for k, g in enumerate(idx.groups):
        if not np.all(idx.membership[g] == k):
            raise AssertionError("pattern membership inconsistent with groups")


@dataclass(frozen=True)
class BallConfig:
    r: float = 0.2
    negative_center_policy: str = "absolute_radius"
    zero_center_epsilon: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.r < 1.0):
            raise ValueError(f"ball radius fraction must lie in (0, 1), got {self.r}")
        if self.negative_center_policy not in NEGATIVE_CENTER_POLICIES:
            raise ValueError(f"unknown negative_center_policy {self.negative_center_policy!r}")
        if self.zero_center_epsilon < 0:
            raise ValueError("zero_center_epsilon must be >= 0")


def ball_radius(center, cfg: BallConfig):
    """Radius of the ball around ``center``: ``r * max(|center|, eps)``."""
    c = np.asarray(center, dtype=float)
    if cfg.negative_center_policy == "reject" and np.any(c < 0):
        raise ValueError("negative ball center under the 'reject' policy")
    rad = cfg.r * np.maximum(np.abs(c), cfg.zero_center_epsilon)
    return float(rad) if rad.ndim == 0 else rad


def in_ball(y_h: float, y_center: float, cfg: BallConfig) -> bool:
    """True when ``y_h`` lies in the closed ball around ``y_center``."""
    return bool(abs(y_h - y_center) <= ball_radius(y_center, cfg))


def outside_matrix(centers, values, cfg: BallConfig) -> np.ndarray:
    """Boolean matrix ``M[i, h] = values[h] not in B(centers[i])``."""
    centers = np.asarray(centers, dtype=float)
    values = np.asarray(values, dtype=float)
    rad = np.atleast_1d(ball_radius(centers, cfg))
    return np.abs(values[None, :] - centers[:, None]) > rad[:, None]
