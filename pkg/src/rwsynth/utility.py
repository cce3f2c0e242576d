"""Analysis-specific and global utility of synthetic data."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .data_model import Dataset
from .rng import child_rngs
from .synth import SyntheticSet, design_matrix


@dataclass(frozen=True)
class EstimateCI:
    point: float
    lower: float
    upper: float
    method: str
    statistic: str
    variance: float | None = None
    df: float | None = None

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return asdict(self)


def parse_statistic(statistic) -> tuple[str, float | None]:
    """Accept ``"mean"``, ``"median"``, ``"quantile(0.9)"`` or ``("quantile", 0.9)``."""
    if isinstance(statistic, (tuple, list)):
        name, q = statistic
        return str(name), float(q)
    s = str(statistic)
    if s.startswith("quantile(") and s.endswith(")"):
        return "quantile", float(s[len("quantile("):-1])
    if s in ("mean", "median"):
        return s, None
    raise ValueError(f"unknown statistic {statistic!r}")


def statistic_label(statistic) -> str:
    name, q = parse_statistic(statistic)
    return f"quantile({q:g})" if name == "quantile" else name


def _stat_fn(statistic):
    name, q = parse_statistic(statistic)
    if name == "mean":
        return lambda a, axis=-1: np.mean(a, axis=axis)
    if name == "median":
        return lambda a, axis=-1: np.quantile(a, 0.5, axis=axis)
    if not 0.0 <= q <= 1.0:
        raise ValueError("quantile level must lie in [0, 1]")
    return lambda a, axis=-1: np.quantile(a, q, axis=axis)


def bootstrap_estimate(
    data,
    statistic="mean",
    B: int = 1000,
    rng=None,
    level: float = 0.95,
    exhaustive: bool = False,
) -> EstimateCI:
    """Percentile bootstrap interval for a statistic of the sensitive column.

    ``exhaustive=True`` enumerates all ``n**n`` resamples instead of drawing
    ``B`` of them (only feasible for tiny ``n``).
    """
    y = data.y if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n = y.size
    if n == 0:
        raise ValueError("cannot bootstrap an empty sample")
    fn = _stat_fn(statistic)
    if exhaustive:
        idx = np.array(list(itertools.product(range(n), repeat=n)))
    else:
        if B < 200:
            raise ValueError("use at least B = 200 bootstrap replicates")
        rng = np.random.default_rng(rng)
        idx = rng.integers(0, n, size=(B, n))
    reps = fn(y[idx], axis=1)
    a = (1 - level) / 2
    lo, hi = np.quantile(reps, [a, 1 - a])
    return EstimateCI(float(fn(y)), float(lo), float(hi), "bootstrap", statistic_label(statistic),
                      variance=float(np.var(reps, ddof=1)))


def combine_partial(estimates: Sequence[float], within_vars: Sequence[float],
                    level: float = 0.95, statistic: str = "") -> EstimateCI:
    """Partially synthetic combining rule.

    ``T = u_bar + b / L`` with ``b`` the between-dataset variance; the
    interval uses a t reference with ``(L - 1)(1 + u_bar L / b)^2`` degrees of
    freedom, or the normal when ``b = 0``.
    """
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(within_vars, dtype=float)
    L = q.size
    if L < 1:
        raise ValueError("need at least one estimate")
    if u.shape != q.shape:
        raise ValueError("one within-dataset variance per estimate is required")
    if np.any(u < 0):
        raise ValueError("within-dataset variances must be >= 0")
    qbar = float(q.mean())
    ubar = float(u.mean())
    b = float(q.var(ddof=1)) if L > 1 else 0.0
    T = ubar + b / L
    a = (1 - level) / 2
    if b > 0:
        df = (L - 1) * (1 + ubar * L / b) ** 2
        crit = float(stats.t.ppf(1 - a, df))
    else:
        df = float("inf")
        crit = float(stats.norm.ppf(1 - a))
    half = crit * np.sqrt(T)
    return EstimateCI(qbar, float(qbar - half), float(qbar + half), "combined_partial", statistic,
                      variance=T, df=df)


def combine_bootstrap(sset: SyntheticSet, statistic="mean", B: int = 1000, rng=None,
                      level: float = 0.95) -> EstimateCI:
    """Bootstrap each synthetic dataset, then combine across datasets."""
    ests = [bootstrap_estimate(ds, statistic, B, r, level)
            for ds, r in zip(sset.datasets, child_rngs(rng if rng is not None else 0, sset.L))]
    return combine_partial([e.point for e in ests], [e.variance for e in ests], level,
                           statistic_label(statistic))


def ols_coefficient(ds: Dataset, predictors: Sequence[str], target: tuple[str, str],
                    response: str | None = None) -> tuple[float, float]:
    """OLS estimate and sampling variance of one dummy coefficient.

    ``target = (column, level)`` names the dummy; the first level of each
    predictor is the reference.
    """
    if response is not None and response != ds.schema.sensitive.name:
        raise ValueError("only the sensitive column can be the response")
    X, names = design_matrix(ds, predictors)
    key = f"{target[0]}={target[1]}"
    if key not in names:
        raise ValueError(f"no dummy {key!r}; candidates are {names[1:]}")
    n, p = X.shape
    if n <= p or np.linalg.matrix_rank(X) < p:
        raise ValueError("design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(X, ds.y, rcond=None)
    resid = ds.y - X @ beta
    s2 = resid @ resid / (n - p)
    cov = s2 * np.linalg.inv(X.T @ X)
    j = names.index(key)
    return float(beta[j]), float(cov[j, j])


@dataclass(frozen=True)
class EcdfUtility:
    U_m: float
    U_a: float

    def to_dict(self) -> dict:
        return asdict(self)


def ecdf_utility(conf, syn) -> EcdfUtility:
    """Max and mean-squared ECDF gaps, evaluated on the merged support.

    ``syn`` may be a :class:`SyntheticSet` (its datasets are pooled), a
    :class:`Dataset` or an array.
    """
    c = conf.y if isinstance(conf, Dataset) else np.asarray(conf, dtype=float)
    if isinstance(syn, SyntheticSet):
        s = syn.pooled_y()
    elif isinstance(syn, Dataset):
        s = syn.y
    else:
        s = np.asarray(syn, dtype=float)
    if c.size == 0 or s.size == 0:
        raise ValueError("empty sample")
    pts = np.unique(np.concatenate([c, s]))
    fc = np.searchsorted(np.sort(c), pts, side="right") / c.size
    fs = np.searchsorted(np.sort(s), pts, side="right") / s.size
    d = fc - fs
    return EcdfUtility(float(np.max(np.abs(d))), float(np.mean(d ** 2)))
