"""Columnar trace files: one ``.npz`` array per parameter plus a JSON header."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mixture import MixtureConfig, MixtureDraws
from .negbin import NBConfig, NBDraws

_ARRAYS = {
    "mixture": ("pi", "beta", "sigma", "gamma", "z", "chain"),
    "negative_binomial": ("mu", "phi", "chain"),
}


def save_draws(draws, path, seed=None) -> Path:
    """Write ``draws`` to ``path`` (``.npz``); the header records family, config and seed."""
    path = Path(path)
    header = {
        "family": draws.family,
        "config": draws.config.to_dict(),
        "seed": seed,
        "acceptance": draws.acceptance,
        "rhat": draws.rhat,
    }
    arrays = {k: np.asarray(getattr(draws, k)) for k in _ARRAYS[draws.family]}
    with path.open("wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_header(path) -> dict:
    with np.load(path, allow_pickle=False) as f:
        return json.loads(str(f["header"]))


def load_draws(path):
    with np.load(path, allow_pickle=False) as f:
        header = json.loads(str(f["header"]))
        arrays = {k: f[k] for k in _ARRAYS[header["family"]]}
    for a in arrays.values():
        a.setflags(write=False)
    if header["family"] == "mixture":
        return MixtureDraws(**arrays, config=MixtureConfig(**header["config"]),
                            acceptance=header["acceptance"], rhat=header["rhat"])
    return NBDraws(**arrays, config=NBConfig(**header["config"]),
                   acceptance=header["acceptance"], rhat=header["rhat"])
