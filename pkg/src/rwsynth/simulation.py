"""Simulated inputs: a two-component NB mixture and a CE-like income table."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data_model import Column, Dataset, Schema


@dataclass(frozen=True)
class NBMixtureSpec:
    n: int = 1000
    theta: tuple[float, float] = (0.7, 0.3)
    mu: tuple[float, float] = (100.0, 100.0)
    phi: tuple[float, float] = (20.0, 5.0)
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(self.theta) != 2 or len(self.mu) != 2 or len(self.phi) != 2:
            raise ValueError("the mixture has exactly two components")
        if min(self.theta) < 0 or abs(sum(self.theta) - 1.0) > 1e-12:
            raise ValueError("theta must lie on the simplex")
        if min(self.mu) <= 0 or min(self.phi) <= 0:
            raise ValueError("mu and phi must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


NB_SCHEMA = Schema((
    Column("id", "id", "continuous"),
    Column("pattern", "pattern", "categorical", ("all",)),
    Column("y", "sensitive", "continuous"),
))


def generate_nb_mixture(spec: NBMixtureSpec, rng=None) -> Dataset:
    """Counts from ``theta_1 NB(mu_1, phi_1) + theta_2 NB(mu_2, phi_2)``."""
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    comp = rng.choice(2, size=spec.n, p=np.asarray(spec.theta, dtype=float))
    mu = np.asarray(spec.mu, dtype=float)[comp]
    phi = np.asarray(spec.phi, dtype=float)[comp]
    y = rng.negative_binomial(phi, phi / (phi + mu)).astype(float)
    return Dataset(NB_SCHEMA, {"pattern": np.zeros(spec.n, dtype=int)}, y,
                   [str(i) for i in range(spec.n)])


def _levels(k: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(1, k + 1))


CE_SCHEMA = Schema((
    Column("cu_id", "id", "continuous"),
    Column("Gender", "pattern", "categorical", _levels(2)),
    Column("Age", "pattern", "categorical", _levels(5)),
    Column("Education", "predictor", "categorical", _levels(8)),
    Column("Region", "pattern", "categorical", _levels(4)),
    Column("Urban", "predictor", "categorical", _levels(2)),
    Column("Earner", "predictor", "categorical", _levels(2)),
    Column("Income", "sensitive", "continuous"),
))
CE_PATTERN_VARS = ("Gender", "Age", "Region")

_MARGINS = {
    "Gender": (0.48, 0.52),
    "Age": (0.14, 0.19, 0.21, 0.22, 0.24),
    "Education": (0.04, 0.08, 0.26, 0.20, 0.10, 0.20, 0.09, 0.03),
    "Region": (0.18, 0.22, 0.38, 0.22),
    "Urban": (0.93, 0.07),
    "Earner": (0.78, 0.22),
}


def generate_ce_fixture(n: int = 6208, seed: int | None = 0) -> Dataset:
    """Stand-in for the confidential CE sample.

    Every {Gender, Age, Region} cell receives at least two records, so the
    40 intruder patterns are all non-singleton. Income is a right-skewed
    lognormal mixture with about 1% small negative values, clipped to
    roughly (-7K, 1800K).
    """
    cells = [(g, a, r) for g in range(2) for a in range(5) for r in range(4)]
    if n < len(cells):
        raise ValueError(f"n = {n} cannot populate the {len(cells)} pattern cells")
    if n < 2 * len(cells):
        raise ValueError(f"n = {n} is too small to make all {len(cells)} patterns non-singleton")
    rng = np.random.default_rng(seed)
    codes = {k: rng.choice(len(p), size=n, p=np.asarray(p) / sum(p)) for k, p in _MARGINS.items()}
    seeded = np.array(cells * 2)
    codes["Gender"][: seeded.shape[0]] = seeded[:, 0]
    codes["Age"][: seeded.shape[0]] = seeded[:, 1]
    codes["Region"][: seeded.shape[0]] = seeded[:, 2]
    perm = rng.permutation(n)
    codes = {k: v[perm] for k, v in codes.items()}

    age_eff = np.array([-0.45, 0.05, 0.2, 0.15, -0.3])
    reg_eff = np.array([0.1, -0.05, -0.1, 0.08])
    mu = (10.75 + 0.07 * codes["Education"] + age_eff[codes["Age"]] + reg_eff[codes["Region"]]
          - 0.12 * codes["Urban"] - 0.75 * codes["Earner"] + 0.05 * codes["Gender"])
    tail = rng.random(n) < 0.12
    noise = np.where(tail, rng.normal(0.8, 0.9, n), rng.normal(0.0, 0.6, n))
    income = np.round(np.exp(mu + noise))
    neg = rng.random(n) < 0.01
    income[neg] = -np.round(rng.uniform(0, 7000, neg.sum()))
    income = np.clip(income, -7000, 1_800_000)
    return Dataset(CE_SCHEMA, codes, income, [str(i + 1) for i in range(n)])


WAM_SCHEMA = Schema((
    Column("P", "pattern", "categorical", ("p1", "p2")),
    Column("G", "predictor", "categorical", ("a", "b", "c")),
    Column("y", "sensitive", "continuous"),
))


def generate_whack_a_mole_fixture(seed: int | None = 0, n_spread: int = 39, spread=(250.0, 4000.0),
                                  n_mode: int = 60, n_anchor: int = 300, n_low: int = 200) -> Dataset:
    """Small table on which marginal weighting exposes a moderate-risk record.

    Record 0 (pattern ``p1``, group ``c``, value 1000) shares its pattern
    with ``n_spread`` isolated group-``b`` records spread log-uniformly over
    ``spread`` and a tight group-``a`` mode near 100. Pattern ``p2`` anchors
    group ``c`` near 1000 and group ``a`` near 100.

    Under a single normal regression on log values with group dummies, the
    isolated records carry most of the residual spread. Marginal weights
    nearly remove them, the fitted scale collapses and record 0 is then
    reproduced inside its own ball far more often, so its risk jumps.
    Pairwise weights keep the spread records at moderate weight and the
    jump does not happen.
    """
    rng = np.random.default_rng(seed)
    lo, hi = np.log(spread[0]), np.log(spread[1])
    blocks = [
        (0, 2, np.array([1000.0])),
        (0, 1, np.round(np.exp(rng.uniform(lo, hi, n_spread)))),
        (0, 0, np.round(100 * np.exp(rng.normal(0, 0.05, n_mode)))),
        (1, 2, np.round(1000 * np.exp(rng.normal(0, 0.04, n_anchor)))),
        (1, 0, np.round(100 * np.exp(rng.normal(0, 0.1, n_low)))),
    ]
    P = np.concatenate([np.full(b[2].size, b[0]) for b in blocks])
    G = np.concatenate([np.full(b[2].size, b[1]) for b in blocks])
    y = np.concatenate([b[2] for b in blocks])
    return Dataset(WAM_SCHEMA, {"P": P, "G": G}, y)
