"""MCMC estimation of risk-weighted pseudo posteriors."""
from __future__ import annotations

import numpy as np

from .diagnostics import mc_standard_error, split_rhat
from .mixture import (
    MixtureConfig,
    MixtureDraws,
    MixtureParams,
    NumericalError,
    fit_mixture_pseudo,
    normal_logpdf,
    sample_z,
    sample_z_all,
)
from .negbin import NBConfig, NBDraws, NBParams, fit_nb_pseudo, nb_logpmf
from .trace import load_draws, load_header, save_draws


def log_pseudo_likelihood(params, y, X, w) -> float:
    """Weighted log likelihood ``sum_i w_i log p(y_i | X_i, params)``.

    ``params`` is :class:`NBParams` (``X`` ignored) or :class:`MixtureParams`
    with labels ``z``, in which case each record uses its own component.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if w.shape != y.shape:
        raise ValueError("y and w lengths disagree")
    if isinstance(params, NBParams):
        terms = nb_logpmf(y, params.mu, params.phi)
    elif isinstance(params, MixtureParams):
        if params.z is None:
            raise ValueError("mixture pseudo likelihood needs component labels z")
        X = np.asarray(X, dtype=float)
        if X.shape[0] != y.size:
            raise ValueError("X rows and y length disagree")
        z = np.asarray(params.z)
        mean = np.einsum("ij,ij->i", X, np.asarray(params.beta)[z])
        terms = normal_logpdf(y, mean, np.asarray(params.sigma)[z])
    else:
        raise TypeError(f"unsupported parameter type {type(params).__name__}")
    # zero weight removes the term even where the density is -inf
    val = float(np.sum(np.where(w == 0, 0.0, w * terms)))
    if not np.isfinite(val):
        raise NumericalError("non-finite pseudo likelihood: invalid parameter state")
    return val


__all__ = [
    "MixtureConfig", "MixtureDraws", "MixtureParams", "NBConfig", "NBDraws", "NBParams",
    "NumericalError", "fit_mixture_pseudo", "fit_nb_pseudo", "load_draws", "load_header", "log_pseudo_likelihood",
    "mc_standard_error", "nb_logpmf", "normal_logpdf", "sample_z", "sample_z_all", "save_draws", "split_rhat",
]
