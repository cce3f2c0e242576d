"""Risk-weighted single negative-binomial synthesizer.

Random-walk Metropolis on ``(log mu, log phi)`` with independent normal
priors on both logs. The negative binomial uses the mean/dispersion form with
variance ``mu + mu**2 / phi``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln

from ..rng import child_rngs
from .diagnostics import split_rhat
from .mixture import NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NBConfig:
    log_mu_prior_mean: float = 0.0
    log_mu_prior_sd: float = 5.0
    log_phi_prior_mean: float = 0.0
    log_phi_prior_sd: float = 5.0
    step_log_mu: float = 0.05
    step_log_phi: float = 0.2
    adapt: bool = True
    target_accept: float = 0.3
    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 2
    chains: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.step_log_mu <= 0 or self.step_log_phi <= 0:
            raise ValueError("Metropolis step sizes must be positive")
        if self.log_mu_prior_sd <= 0 or self.log_phi_prior_sd <= 0:
            raise ValueError("prior standard deviations must be positive")
        if not (self.iterations > self.burn_in >= 0):
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1 or self.chains < 1:
            raise ValueError("thin and chains must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NBParams:
    mu: float
    phi: float


@dataclass(frozen=True)
class NBDraws:
    mu: np.ndarray
    phi: np.ndarray
    chain: np.ndarray
    config: NBConfig
    acceptance: dict
    rhat: dict

    family = "negative_binomial"

    def __len__(self):
        return self.mu.size

    def params(self, s: int) -> NBParams:
        return NBParams(float(self.mu[s]), float(self.phi[s]))


def nb_logpmf(y, mu, phi):
    y = np.asarray(y, dtype=float)
    return (gammaln(y + phi) - gammaln(phi) - gammaln(y + 1)
            + phi * (np.log(phi) - np.log(phi + mu)) + y * (np.log(mu) - np.log(phi + mu)))


def _log_target(theta, y, w, cfg: NBConfig):
    lmu, lphi = theta
    mu, phi = np.exp(lmu), np.exp(lphi)
    ll = float(np.dot(w, nb_logpmf(y, mu, phi))) if w.any() else 0.0
    lp = (-0.5 * ((lmu - cfg.log_mu_prior_mean) / cfg.log_mu_prior_sd) ** 2
          - 0.5 * ((lphi - cfg.log_phi_prior_mean) / cfg.log_phi_prior_sd) ** 2)
    return ll + lp


def _start(y, w):
    if w.sum() > 0:
        m = max(float(np.average(y, weights=w)), 0.5)
        v = float(np.average((y - m) ** 2, weights=w))
    else:
        m, v = 1.0, 2.0
    phi = m * m / (v - m) if v > m else 100.0
    return np.array([np.log(m), np.log(min(max(phi, 1e-2), 1e4))])


def _run_chain(y, w, cfg: NBConfig, rng, start):
    theta = start.copy()
    cur = _log_target(theta, y, w, cfg)
    if not np.isfinite(cur):
        raise NumericalError("non-finite log target at the starting point")
    step = np.array([cfg.step_log_mu, cfg.step_log_phi])
    keep = range(cfg.burn_in, cfg.iterations, cfg.thin)
    out = np.empty((len(keep), 2))
    acc_post = 0
    s = 0
    for t in range(cfg.iterations):
        prop = theta + step * rng.standard_normal(2)
        new = _log_target(prop, y, w, cfg)
        accept = np.isfinite(new) and np.log(rng.random()) < new - cur
        if accept:
            theta, cur = prop, new
        if t < cfg.burn_in:
            if cfg.adapt:
                step *= np.exp(0.05 * (float(accept) - cfg.target_accept))
        else:
            acc_post += int(accept)
            if (t - cfg.burn_in) % cfg.thin == 0:
                out[s] = theta
                s += 1
    return out, acc_post / (cfg.iterations - cfg.burn_in)


def fit_nb_pseudo(y, w, cfg: NBConfig, rng=None) -> NBDraws:
    """Draws from the weighted pseudo posterior of a single NB model.

    A zero total weight is allowed: the target is then the (proper) prior.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if y.shape != w.shape or y.ndim != 1:
        raise ValueError("y and w lengths disagree")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("negative binomial data must be nonnegative integers")
    if w.sum() <= 0:
        log.warning("all weights are zero: sampling the prior")
    start = _start(y, w)
    runs = [_run_chain(y, w, cfg, r, start) for r in child_rngs(cfg.seed if rng is None else rng, cfg.chains)]
    th = np.concatenate([r[0] for r in runs])
    chain = np.repeat(np.arange(cfg.chains), [len(r[0]) for r in runs])
    rhat = {
        "log_mu": split_rhat(np.vstack([r[0][:, 0] for r in runs])),
        "log_phi": split_rhat(np.vstack([r[0][:, 1] for r in runs])),
    }
    for name, v in rhat.items():
        if np.isfinite(v) and v > 1.1:
            log.warning("split R-hat above 1.1 for %s: %.3f", name, v)
    mu, phi = np.exp(th[:, 0]), np.exp(th[:, 1])
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(phi)) and np.all(mu > 0) and np.all(phi > 0)):
        raise NumericalError("non-finite negative binomial draws")
    for a in (mu, phi, chain):
        a.setflags(write=False)
    return NBDraws(mu, phi, chain, cfg, {"per_chain": [r[1] for r in runs]}, rhat)
