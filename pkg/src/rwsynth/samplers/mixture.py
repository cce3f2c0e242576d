"""Risk-weighted truncated-DP mixture of normal linear regressions.

Blocked Gibbs sampler with explicit component labels. Each record's
likelihood contribution *and* its label's prior mass are raised to the
record weight, so the weighted target is

    prod_i [pi_{z_i} N(y_i | X_i b_{z_i}, s_{z_i}^2)]^{w_i} * prior.

The Dirichlet update therefore uses weighted counts and the label full
conditional is proportional to ``(pi_k N(y_i | ...))^{w_i}``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from ..rng import child_rngs
from .diagnostics import split_rhat

log = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)


class NumericalError(RuntimeError):
    """The chain reached a non-finite state."""


@dataclass(frozen=True)
class MixtureConfig:
    K: int = 10
    a_gamma: float = 1.0
    b_gamma: float = 1.0
    beta_prior_scale: float = 10.0
    sigma_prior_df: float = 3.0
    sigma_prior_scale: float = 1.0
    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 2
    chains: int = 2
    seed: int = 0
    fixed_sigma: float | None = None
    sigma_step: float = 0.1
    gamma_step: float = 0.5
    target_accept: float = 0.4
    n_jobs: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not (self.iterations > self.burn_in >= 0):
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1 or self.chains < 1:
            raise ValueError("thin and chains must be >= 1")
        if self.beta_prior_scale <= 0 or self.a_gamma <= 0 or self.b_gamma <= 0:
            raise ValueError("prior scales must be positive")
        if self.fixed_sigma is not None and self.fixed_sigma <= 0:
            raise ValueError("fixed_sigma must be positive")
        if self.sigma_step <= 0 or self.gamma_step <= 0:
            raise ValueError("step sizes must be positive")

    @property
    def retained_per_chain(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MixtureParams:
    pi: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    z: np.ndarray | None = None
    gamma: float = 1.0


@dataclass(frozen=True)
class MixtureDraws:
    """Retained draws, chains concatenated in chain order.

    Shapes: ``pi (S, K)``, ``beta (S, K, R)``, ``sigma (S, K)``,
    ``gamma (S,)``, ``z (S, n)`` with 0-based labels, ``chain (S,)``.
    """

    pi: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    z: np.ndarray
    chain: np.ndarray
    config: MixtureConfig
    acceptance: dict
    rhat: dict

    family = "mixture"

    def __len__(self):
        return self.pi.shape[0]

    def params(self, s: int) -> MixtureParams:
        return MixtureParams(self.pi[s], self.beta[s], self.sigma[s], self.z[s], float(self.gamma[s]))

    def occupied(self) -> np.ndarray:
        """Number of distinct labels in use per retained draw."""
        K = self.pi.shape[1]
        return np.array([np.count_nonzero(np.bincount(z, minlength=K)) for z in self.z])


def normal_logpdf(y, mean, sd):
    return -0.5 * LOG_2PI - np.log(sd) - 0.5 * ((y - mean) / sd) ** 2


def component_logpdf(y, X, beta, sigma) -> np.ndarray:
    """``(n, K)`` matrix of ``log N(y_i | X_i b_k, s_k^2)``."""
    return normal_logpdf(np.asarray(y)[:, None], X @ beta.T, sigma[None, :])


def sample_categorical_log(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of an unnormalised ``(n, K)`` log-probability matrix."""
    logp = np.atleast_2d(logp)
    prob = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
    cum = np.cumsum(prob, axis=1)
    u = rng.random(logp.shape[0])[:, None] * cum[:, -1:]
    return np.minimum((u >= cum).sum(axis=1), logp.shape[1] - 1)


def sample_z(y_i, X_i, pi, beta, sigma, rng, weight: float = 1.0) -> int:
    """Label draw with probabilities proportional to ``(pi_k N(y_i | X_i b_k, s_k^2))^weight``.

    Works in log space, so densities that underflow individually still give a
    valid draw.
    """
    pi = np.asarray(pi, dtype=float)
    with np.errstate(divide="ignore"):
        lp = np.log(pi) + normal_logpdf(y_i, np.asarray(beta) @ np.asarray(X_i), np.asarray(sigma))
    return int(sample_categorical_log(weight * lp[None, :], rng)[0])


def sample_z_all(y, X, log_pi, beta, sigma, rng, w=None) -> np.ndarray:
    lp = log_pi[None, :] + component_logpdf(y, X, beta, sigma)
    if w is not None:
        lp = np.asarray(w)[:, None] * lp
    return sample_categorical_log(lp, rng)


def log_dirichlet_draw(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Log of a Dirichlet draw, stable for concentration parameters far below 1."""
    # Gamma(a) = Gamma(a + 1) * U^(1/a)
    lg = np.log(rng.gamma(alpha + 1.0)) + np.log(rng.random(alpha.size)) / alpha
    return lg - logsumexp(lg)


def _half_t_logpdf(x, df, scale):
    return -(df + 1) / 2 * np.log1p((x / scale) ** 2 / df)


def mixture_loglik(y, X, w, beta, sigma, z) -> float:
    mean = np.einsum("ij,ij->i", X, beta[z])
    return float(np.sum(w * normal_logpdf(y, mean, sigma[z])))


class _Chain:
    def __init__(self, y, X, w, cfg: MixtureConfig, rng):
        self.y, self.X, self.w, self.cfg, self.rng = y, X, w, cfg, rng
        n, R = X.shape
        K = cfg.K
        self.n, self.R, self.K = n, R, K
        self.prior_prec = np.eye(R) / cfg.beta_prior_scale ** 2
        # deterministic start: quantile bins of y, per-bin least squares
        ranks = np.argsort(np.argsort(y, kind="stable"), kind="stable")
        self.z = np.minimum(ranks * K // n, K - 1)
        self.beta = np.zeros((K, R))
        self.sigma = np.full(K, max(float(np.std(y)), 1e-3))
        for k in range(K):
            m = self.z == k
            if m.sum() == 0:
                continue
            b, *_ = np.linalg.lstsq(X[m], y[m], rcond=None)
            self.beta[k] = b
            resid = y[m] - X[m] @ b
            if m.sum() > 1 and resid.std() > 0:
                self.sigma[k] = max(float(resid.std()), 1e-3 * self.sigma[k])
        if cfg.fixed_sigma is not None:
            self.sigma[:] = cfg.fixed_sigma
        self.log_pi = np.full(K, -np.log(K))
        self.gamma = 1.0
        self.sigma_step = np.full(K, cfg.sigma_step)
        self.gamma_step = cfg.gamma_step
        self.sigma_acc = np.zeros(K)
        self.sigma_tries = 0
        self.gamma_acc = 0

    def step(self, adapt: bool) -> None:
        y, X, w, cfg, rng, K = self.y, self.X, self.w, self.cfg, self.rng, self.K
        if K > 1:
            self.z = sample_z_all(y, X, self.log_pi, self.beta, self.sigma, rng, w)
            counts = np.bincount(self.z, weights=w, minlength=K)
            self.log_pi = log_dirichlet_draw(self.gamma / K + counts, rng)
        self._update_beta()
        if cfg.fixed_sigma is None:
            self._update_sigma(adapt)
        if K > 1:
            self._update_gamma(adapt)

    def _update_beta(self):
        y, X, w, rng = self.y, self.X, self.w, self.rng
        for k in range(self.K):
            m = self.z == k
            s2 = self.sigma[k] ** 2
            Xw = X[m] * w[m, None]
            prec = Xw.T @ X[m] / s2 + self.prior_prec
            rhs = Xw.T @ y[m] / s2
            L = np.linalg.cholesky(prec)
            mean = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            self.beta[k] = mean + np.linalg.solve(L.T, rng.standard_normal(self.R))

    def _sigma_logpost(self, sigma, wsum, ssr):
        cfg = self.cfg
        return (-wsum * np.log(sigma) - ssr / (2 * sigma ** 2)
                + _half_t_logpdf(sigma, cfg.sigma_prior_df, cfg.sigma_prior_scale) + np.log(sigma))

    def _update_sigma(self, adapt):
        y, X, w, rng, K = self.y, self.X, self.w, self.rng, self.K
        resid = y - np.einsum("ij,ij->i", X, self.beta[self.z])
        wsum = np.bincount(self.z, weights=w, minlength=K)
        ssr = np.bincount(self.z, weights=w * resid ** 2, minlength=K)
        prop = self.sigma * np.exp(self.sigma_step * rng.standard_normal(K))
        log_r = self._sigma_logpost(prop, wsum, ssr) - self._sigma_logpost(self.sigma, wsum, ssr)
        acc = np.log(rng.random(K)) < log_r
        self.sigma = np.where(acc, prop, self.sigma)
        self.sigma_acc += acc
        self.sigma_tries += 1
        if adapt:
            self.sigma_step *= np.exp(0.05 * (acc - self.cfg.target_accept))

    def _gamma_logpost(self, g):
        K, cfg = self.K, self.cfg
        return (gammaln(g) - K * gammaln(g / K) + (g / K - 1) * self.log_pi.sum()
                + cfg.a_gamma * np.log(g) - cfg.b_gamma * g)

    def _update_gamma(self, adapt):
        prop = self.gamma * np.exp(self.gamma_step * self.rng.standard_normal())
        log_r = self._gamma_logpost(prop) - self._gamma_logpost(self.gamma)
        acc = np.log(self.rng.random()) < log_r
        if acc:
            self.gamma = float(prop)
        self.gamma_acc += int(acc)
        if adapt:
            self.gamma_step *= np.exp(0.05 * (acc - self.cfg.target_accept))

    def check(self, t):
        if not (np.all(np.isfinite(self.beta)) and np.all(self.sigma > 0)
                and np.all(np.isfinite(self.sigma)) and np.isfinite(self.gamma)
                and np.all(np.isfinite(self.log_pi))):
            raise NumericalError(f"non-finite mixture state at iteration {t}")


def _run_chain(args):
    y, X, w, cfg, rng = args
    ch = _Chain(y, X, w, cfg, rng)
    keep = range(cfg.burn_in, cfg.iterations, cfg.thin)
    S = len(keep)
    out = {
        "pi": np.empty((S, cfg.K)),
        "beta": np.empty((S, cfg.K, X.shape[1])),
        "sigma": np.empty((S, cfg.K)),
        "gamma": np.empty(S),
        "z": np.empty((S, y.size), dtype=np.int16 if cfg.K < 2**15 else np.int32),
        "loglik": np.empty(S),
    }
    s = 0
    for t in range(cfg.iterations):
        ch.step(adapt=t < cfg.burn_in)
        ch.check(t)
        if t == cfg.burn_in - 1:
            ch.sigma_acc[:] = 0
            ch.sigma_tries = 0
            ch.gamma_acc = 0
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            out["pi"][s] = np.exp(ch.log_pi)
            out["beta"][s] = ch.beta
            out["sigma"][s] = ch.sigma
            out["gamma"][s] = ch.gamma
            out["z"][s] = ch.z
            out["loglik"][s] = mixture_loglik(y, X, w, ch.beta, ch.sigma, ch.z)
            s += 1
    post = max(ch.sigma_tries, 1)
    out["acceptance"] = {
        "sigma": float(ch.sigma_acc.mean() / post) if cfg.fixed_sigma is None else None,
        "gamma": ch.gamma_acc / post if cfg.K > 1 else None,
    }
    return out


def fit_mixture_pseudo(y, X, w, cfg: MixtureConfig, rng=None) -> MixtureDraws:
    """Sample the risk-weighted pseudo posterior of the mixture synthesizer.

    Parameters
    ----------
    y : array (n,)
        Modelled response (already log-transformed if applicable).
    X : array (n, R)
        Design matrix including an intercept column.
    w : array (n,) or WeightVector
        Record weights in [0, 1].
    cfg : MixtureConfig
    rng : Generator or int, optional
        Source of the per-chain streams; defaults to ``cfg.seed``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size or w.shape != y.shape:
        raise ValueError("y, X and w lengths disagree")
    if y.size < 2:
        raise ValueError("need at least two observations")
    if w.sum() <= 0:
        raise ValueError("all weights are zero: the pseudo posterior is the prior only")
    rngs = child_rngs(cfg.seed if rng is None else rng, cfg.chains)
    jobs = [(y, X, w, cfg, r) for r in rngs]
    if cfg.n_jobs > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(min(cfg.n_jobs, cfg.chains)) as ex:
            runs = list(ex.map(_run_chain, jobs))
    else:
        runs = [_run_chain(j) for j in jobs]
    cat = {k: np.concatenate([r[k] for r in runs]) for k in ("pi", "beta", "sigma", "gamma", "z")}
    chain = np.repeat(np.arange(cfg.chains), [len(r["gamma"]) for r in runs])
    rhat = {
        "loglik": split_rhat(np.vstack([r["loglik"] for r in runs])),
        "gamma": split_rhat(np.vstack([r["gamma"] for r in runs])) if cfg.K > 1 else None,
    }
    if cfg.K == 1:
        rhat["beta"] = [split_rhat(np.vstack([r["beta"][:, 0, j] for r in runs])) for j in range(X.shape[1])]
    for name, v in rhat.items():
        vals = v if isinstance(v, list) else [v]
        if any(x is not None and np.isfinite(x) and x > 1.1 for x in vals):
            log.warning("split R-hat above 1.1 for %s: %s", name, v)
    draws = MixtureDraws(
        **cat, chain=chain, config=cfg,
        acceptance={"per_chain": [r["acceptance"] for r in runs]}, rhat=rhat,
    )
    for a in (draws.pi, draws.beta, draws.sigma, draws.gamma, draws.z):
        a.setflags(write=False)
    return draws
