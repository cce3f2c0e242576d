"""Partially synthetic datasets from the posterior predictive.

Only the sensitive column is replaced; every other cell is copied from the
confidential source.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import Dataset, Schema, load_dataset, write_dataset
from .rng import child_rngs
from .samplers import MixtureDraws, NBDraws, sample_z_all


@dataclass(frozen=True)
class ResponseTransform:
    """Optional ``log(y + shift)`` modelling scale for the sensitive column."""

    log: bool = False
    shift: float = 0.0

    @classmethod
    def for_data(cls, y, log: bool) -> "ResponseTransform":
        if not log:
            return cls(False, 0.0)
        lo = float(np.min(y))
        return cls(True, 0.0 if lo > 0 else 1.0 - lo)

    def forward(self, y):
        y = np.asarray(y, dtype=float)
        if not self.log:
            return y
        if np.any(y + self.shift <= 0):
            raise ValueError("values below the log shift cannot be transformed")
        return np.log(y + self.shift)

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(u) - self.shift if self.log else u


def design_matrix(ds: Dataset, columns: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    """Intercept plus treatment dummies (first declared level is the reference)."""
    cols = [np.ones(ds.n)]
    names = ["(Intercept)"]
    for name in columns:
        col = ds.schema[name]
        if col.kind != "categorical":
            raise ValueError(f"predictor {name!r} is not categorical")
        codes = ds.codes[name]
        for k, lv in enumerate(col.levels[1:], start=1):
            cols.append((codes == k).astype(float))
            names.append(f"{name}={lv}")
    return np.column_stack(cols), names


@dataclass(frozen=True)
class SyntheticSet:
    datasets: tuple[Dataset, ...]
    draw_indices: tuple[int, ...]
    seed: int | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.datasets:
            raise ValueError("a synthetic set needs at least one dataset")
        if len(self.draw_indices) != len(self.datasets):
            raise ValueError("one draw index per dataset is required")

    @property
    def L(self) -> int:
        return len(self.datasets)

    def pooled_y(self) -> np.ndarray:
        return np.concatenate([d.y for d in self.datasets])


def select_draws(n_draws: int, L: int) -> np.ndarray:
    """``L`` retained iterations spread evenly over the trace (strictly increasing)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if L > n_draws:
        raise ValueError(f"L = {L} exceeds the {n_draws} retained draws")
    if L == 1:
        return np.array([n_draws - 1])
    return np.arange(L) * (n_draws - 1) // (L - 1)


def _seed_of(rng):
    return rng if isinstance(rng, int) else None


def generate_mixture_synthetic(
    draws: MixtureDraws,
    conf: Dataset,
    L: int,
    rng,
    X: np.ndarray,
    transform: ResponseTransform = ResponseTransform(),
    provenance: dict | None = None,
) -> SyntheticSet:
    """Replace the sensitive column ``L`` times from the mixture predictive.

    For each selected draw the labels are refreshed from their full
    conditional given the confidential response, then a new response is drawn
    from the labelled normal regression and mapped back to natural units.
    """
    sel = select_draws(len(draws), L)
    u = transform.forward(conf.y)
    out = []
    for s, r in zip(sel, child_rngs(rng, L)):
        with np.errstate(divide="ignore"):
            log_pi = np.log(draws.pi[s])
        beta, sigma = draws.beta[s], draws.sigma[s]
        z = sample_z_all(u, X, log_pi, beta, sigma, r)
        mean = np.einsum("ij,ij->i", X, beta[z])
        u_star = mean + sigma[z] * r.standard_normal(conf.n)
        out.append(conf.with_y(transform.inverse(u_star)))
    return SyntheticSet(tuple(out), tuple(int(s) for s in sel), _seed_of(rng), dict(provenance or {}))


def generate_nb_synthetic(
    draws: NBDraws, conf: Dataset, L: int, rng, provenance: dict | None = None
) -> SyntheticSet:
    """Replace the sensitive column ``L`` times with NB(mu, phi) counts."""
    sel = select_draws(len(draws), L)
    out = []
    for s, r in zip(sel, child_rngs(rng, L)):
        mu, phi = float(draws.mu[s]), float(draws.phi[s])
        y = r.negative_binomial(phi, phi / (phi + mu), size=conf.n).astype(float)
        out.append(conf.with_y(y))
    return SyntheticSet(tuple(out), tuple(int(s) for s in sel), _seed_of(rng), dict(provenance or {}))


def write_synthetic_set(sset: SyntheticSet, outdir, delimiter: str = ",") -> Path:
    """Write ``synthetic_<l>.csv`` (l = 1..L) plus ``manifest.json``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for l, ds in enumerate(sset.datasets, start=1):
        name = f"synthetic_{l}.csv"
        write_dataset(ds, outdir / name, delimiter)
        files.append(name)
    manifest = {
        "files": files,
        "L": sset.L,
        "seed": sset.seed,
        "draw_indices": list(sset.draw_indices),
        "schema": sset.datasets[0].schema.to_dict(),
        "delimiter": delimiter,
        "provenance": sset.provenance,
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_synthetic_set(manifest_path) -> SyntheticSet:
    manifest_path = Path(manifest_path)
    m = json.loads(manifest_path.read_text())
    schema = Schema.from_dict(m["schema"])
    base = manifest_path.parent
    ds = tuple(load_dataset(base / f, schema, m.get("delimiter", ",")) for f in m["files"])
    return SyntheticSet(ds, tuple(m["draw_indices"]), m.get("seed"), m.get("provenance", {}))
