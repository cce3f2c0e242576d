"""Named, independent random streams derived from one master seed."""
from __future__ import annotations

import zlib

import numpy as np

STAGES = ("simulation", "fit", "synthesis", "bootstrap")


def stage_seed(master: int, stage: str) -> np.random.SeedSequence:
    """Seed sequence for ``stage``; stages never share or shift each other's streams."""
    return np.random.SeedSequence(entropy=int(master), spawn_key=(zlib.crc32(stage.encode()),))


def stage_rng(master: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(stage_seed(master, stage))


def child_rngs(seed, count: int) -> list[np.random.Generator]:
    """``count`` independent generators; ``seed`` may be an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        ss = np.random.SeedSequence(int(seed.integers(2**63)))
    elif isinstance(seed, np.random.SeedSequence):
        # fresh copy: spawn() mutates the child counter
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        ss = np.random.SeedSequence(int(seed))
    return [np.random.default_rng(s) for s in ss.spawn(count)]
