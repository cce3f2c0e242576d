"""Convergence diagnostics shared by the samplers."""
from __future__ import annotations

import numpy as np


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction for a ``(n_chains, n_draws)`` trace.

    Each chain is cut in half so that within-chain drift also inflates the
    statistic. Returns ``nan`` for traces that are too short and ``1.0`` for
    traces with zero variance everywhere.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    half = n // 2
    if half < 2:
        return float("nan")
    parts = np.vstack([chains[:, :half], chains[:, n - half:]])
    w = parts.var(axis=1, ddof=1).mean()
    b = half * parts.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (half - 1) / half * w + b / half
    return float(np.sqrt(var_plus / w))


def mc_standard_error(x: np.ndarray) -> float:
    """Monte-Carlo standard error of the mean via batch means."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    nb = max(int(np.sqrt(n)), 2)
    size = n // nb
    if size < 1:
        return float(x.std(ddof=1) / np.sqrt(n))
    means = x[: nb * size].reshape(nb, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(nb))
