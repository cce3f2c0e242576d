import numpy as np
import pytest

from rwsynth.samplers import (
    MixtureConfig,
    MixtureParams,
    NBConfig,
    NBParams,
    fit_mixture_pseudo,
    fit_nb_pseudo,
    load_draws,
    log_pseudo_likelihood,
    mc_standard_error,
    nb_logpmf,
    sample_z,
    save_draws,
    split_rhat,
)

PRIOR_SCALE = 10.0


def _single_normal(iterations=5500, burn_in=500, **kw):
    return MixtureConfig(K=1, iterations=iterations, burn_in=burn_in, thin=1, chains=1,
                         fixed_sigma=1.0, beta_prior_scale=PRIOR_SCALE, **kw)


def _conjugate(y, w):
    prec = np.sum(w) + 1 / PRIOR_SCALE ** 2
    return np.sum(w * y) / prec, np.sqrt(1 / prec)


def _sd_tolerance(sd, n_draws):
    # standard error of a sample sd from roughly independent normal draws
    return 3 * sd / np.sqrt(2 * (n_draws - 1))


def test_conjugate_normal_oracle():
    rng = np.random.default_rng(1)
    y = rng.normal(3.0, 1.0, 50)
    X = np.ones((50, 1))
    draws = fit_mixture_pseudo(y, X, np.ones(50), _single_normal(seed=4))
    b = draws.beta[:, 0, 0]
    assert b.size == 5000
    mean, sd = _conjugate(y, np.ones(50))
    assert mean == pytest.approx(100 * y.sum() / (50 * 100 + 1))
    assert abs(b.mean() - mean) <= 3 * mc_standard_error(b)
    assert abs(b.std(ddof=1) - sd) <= _sd_tolerance(sd, b.size)


def test_weighted_kernel_scales_variance():
    rng = np.random.default_rng(2)
    y = rng.normal(-1.0, 1.0, 40)
    w = np.full(40, 0.25)
    draws = fit_mixture_pseudo(y, np.ones((40, 1)), w, _single_normal(seed=5))
    b = draws.beta[:, 0, 0]
    mean, sd = _conjugate(y, w)
    # sigma^2 / (alpha n) up to the weak prior
    assert sd == pytest.approx(np.sqrt(1 / (0.25 * 40)), rel=0.01)
    assert abs(b.mean() - mean) <= 3 * mc_standard_error(b)
    assert abs(b.std(ddof=1) - sd) <= _sd_tolerance(sd, b.size)


def test_zero_weight_record_is_ignored():
    y = np.array([2.0, 50.0])
    draws = fit_mixture_pseudo(y, np.ones((2, 1)), np.array([1.0, 0.0]), _single_normal(seed=6))
    b = draws.beta[:, 0, 0]
    mean, sd = _conjugate(y[:1], np.ones(1))
    assert abs(b.mean() - mean) <= 3 * mc_standard_error(b)
    assert abs(b.std(ddof=1) - sd) <= _sd_tolerance(sd, b.size)


def test_all_zero_mixture_weights_rejected():
    with pytest.raises(ValueError):
        fit_mixture_pseudo(np.array([1.0, 2.0]), np.ones((2, 1)), np.zeros(2), _single_normal())


def test_nb_zero_weight_samples_prior():
    cfg = NBConfig(iterations=22000, burn_in=2000, thin=4, chains=2, seed=3)
    draws = fit_nb_pseudo(np.array([40.0]), np.array([0.0]), cfg)
    lmu, lphi = np.log(draws.mu), np.log(draws.phi)
    for x in (lmu, lphi):
        assert abs(x.mean()) <= 3 * mc_standard_error(x)
        assert x.std() == pytest.approx(5.0, rel=0.1)


def test_sample_z_single_kernel_and_degenerate_pi():
    rng = np.random.default_rng(0)
    beta = np.array([[0.0], [5.0], [-5.0]])
    sigma = np.ones(3)
    for y in (-4.0, 0.0, 4.0):
        assert sample_z(y, [1.0], [1.0], beta[:1], sigma[:1], rng) == 0
        assert sample_z(y, [1.0], [1.0, 0.0, 0.0], beta, sigma, rng) == 0


def test_sample_z_frequencies_match_weighted_probabilities():
    rng = np.random.default_rng(9)
    beta = np.array([[0.0], [1.0]])
    sigma = np.ones(2)
    n = 20000
    for weight, p0 in ((1.0, 1 / (1 + np.exp(-0.5))), (0.5, 1 / (1 + np.exp(-0.25)))):
        hits = sum(sample_z(0.0, [1.0], [0.5, 0.5], beta, sigma, rng, weight) == 0 for _ in range(n))
        assert abs(hits / n - p0) <= 4 * np.sqrt(p0 * (1 - p0) / n)


def test_sample_z_survives_underflow():
    rng = np.random.default_rng(0)
    beta = np.array([[0.0], [1000.0]])
    assert sample_z(1e4, [1.0], [0.5, 0.5], beta, np.array([1e-3, 1e-3]), rng) == 1


def test_bimodal_data_occupy_two_components():
    rng = np.random.default_rng(11)
    y = np.concatenate([rng.normal(-5, 0.5, 150), rng.normal(5, 0.5, 150)])
    cfg = MixtureConfig(K=5, iterations=600, burn_in=300, thin=1, chains=1, seed=1)
    draws = fit_mixture_pseudo(y, np.ones((300, 1)), np.ones(300), cfg)
    assert np.mean(draws.occupied() >= 2) >= 0.95
    assert draws.z.min() >= 0 and draws.z.max() < 5
    assert np.allclose(draws.pi.sum(axis=1), 1.0)


def test_nb_recovers_generating_values():
    rng = np.random.default_rng(5)
    y = rng.negative_binomial(20, 20 / 120, 1000).astype(float)
    draws = fit_nb_pseudo(y, np.ones(1000), NBConfig(iterations=3000, burn_in=1000, seed=2))
    assert draws.mu.mean() == pytest.approx(y.mean(), rel=0.02)
    assert 14 < draws.phi.mean() < 28
    assert draws.rhat["log_mu"] < 1.1
    assert 0.1 < np.mean(draws.acceptance["per_chain"]) < 0.6


def test_nb_half_weight_widens_posterior():
    rng = np.random.default_rng(6)
    y = rng.negative_binomial(10, 10 / 110, 500).astype(float)
    cfg = NBConfig(iterations=8000, burn_in=1000, seed=7)
    full = fit_nb_pseudo(y, np.ones(500), cfg)
    half = fit_nb_pseudo(y, np.full(500, 0.5), cfg)
    ratio = np.log(half.mu).std() / np.log(full.mu).std()
    assert 1.2 < ratio < 1.7


def test_nb_rejects_non_counts():
    with pytest.raises(ValueError):
        fit_nb_pseudo(np.array([1.5, 2.0]), np.ones(2), NBConfig())


def test_reproducible_and_pool_independent():
    rng = np.random.default_rng(3)
    y = np.concatenate([rng.normal(-2, 1, 60), rng.normal(3, 1, 60)])
    X = np.column_stack([np.ones(120), rng.integers(0, 2, 120)])
    cfg = MixtureConfig(K=3, iterations=60, burn_in=20, chains=2, seed=8)
    a = fit_mixture_pseudo(y, X, np.ones(120), cfg)
    b = fit_mixture_pseudo(y, X, np.ones(120), cfg)
    c = fit_mixture_pseudo(y, X, np.ones(120), MixtureConfig(K=3, iterations=60, burn_in=20,
                                                             chains=2, seed=8, n_jobs=2))
    for k in ("pi", "beta", "sigma", "gamma", "z"):
        assert np.array_equal(getattr(a, k), getattr(b, k))
        assert np.array_equal(getattr(a, k), getattr(c, k))


def test_pseudo_likelihood_is_linear_in_weights():
    rng = np.random.default_rng(4)
    y = rng.poisson(30, 20).astype(float)
    p = NBParams(30.0, 5.0)
    w1, w2 = rng.random(20), rng.random(20)
    total = log_pseudo_likelihood(p, y, None, w1 + w2)
    assert total == pytest.approx(log_pseudo_likelihood(p, y, None, w1) + log_pseudo_likelihood(p, y, None, w2))
    assert log_pseudo_likelihood(p, y, None, np.zeros(20)) == 0.0
    assert log_pseudo_likelihood(p, y, None, np.ones(20)) == pytest.approx(nb_logpmf(y, 30.0, 5.0).sum())

    X = np.ones((20, 1))
    mp = MixtureParams(np.array([0.5, 0.5]), np.array([[0.0], [30.0]]), np.array([1.0, 5.0]),
                       z=np.ones(20, dtype=int))
    assert log_pseudo_likelihood(mp, y, X, 2 * w1) == pytest.approx(2 * log_pseudo_likelihood(mp, y, X, w1))
    with pytest.raises(ValueError):
        log_pseudo_likelihood(MixtureParams(mp.pi, mp.beta, mp.sigma), y, X, w1)


def test_trace_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    y = rng.normal(0, 1, 30)
    draws = fit_mixture_pseudo(y, np.ones((30, 1)), np.ones(30),
                               MixtureConfig(K=2, iterations=40, burn_in=10, chains=2))
    back = load_draws(save_draws(draws, tmp_path / "t.npz", seed=0))
    for k in ("pi", "beta", "sigma", "gamma", "z", "chain"):
        assert np.array_equal(getattr(back, k), getattr(draws, k))
    assert back.config == draws.config
    nb = fit_nb_pseudo(rng.poisson(5, 30).astype(float), np.ones(30), NBConfig(iterations=50, burn_in=10))
    nb_back = load_draws(save_draws(nb, tmp_path / "n.npz"))
    assert np.array_equal(nb_back.mu, nb.mu) and nb_back.config == nb.config


def test_split_rhat():
    rng = np.random.default_rng(0)
    assert split_rhat(rng.normal(size=(2, 2000))) == pytest.approx(1.0, abs=0.02)
    assert split_rhat(np.vstack([np.zeros(100), np.ones(100) * 5])) == float("inf")
    drift = np.vstack([np.linspace(0, 10, 400), np.linspace(0, 10, 400)])
    assert split_rhat(drift) > 1.5
