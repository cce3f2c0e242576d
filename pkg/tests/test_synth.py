import numpy as np
import pytest

from rwsynth.samplers import MixtureConfig, MixtureDraws, NBConfig, NBDraws
from rwsynth.simulation import generate_ce_fixture
from rwsynth.synth import (
    ResponseTransform,
    design_matrix,
    generate_mixture_synthetic,
    generate_nb_synthetic,
    read_synthetic_set,
    select_draws,
    write_synthetic_set,
)

from conftest import make_dataset


def _point_mass_mixture(S, beta, sigma, n):
    """Draws that all equal one fixed parameter value."""
    K, R = beta.shape
    return MixtureDraws(
        pi=np.tile(np.full(K, 1 / K), (S, 1)), beta=np.tile(beta, (S, 1, 1)),
        sigma=np.tile(sigma, (S, 1)), gamma=np.ones(S), z=np.zeros((S, n), dtype=int),
        chain=np.zeros(S, dtype=int), config=MixtureConfig(K=K), acceptance={}, rhat={},
    )


def test_select_draws_even_and_increasing():
    assert select_draws(100, 1).tolist() == [99]
    assert select_draws(100, 2).tolist() == [0, 99]
    sel = select_draws(2000, 20)
    assert sel[0] == 0 and sel[-1] == 1999 and np.all(np.diff(sel) > 0)
    assert select_draws(5, 5).tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        select_draws(5, 6)
    with pytest.raises(ValueError):
        select_draws(5, 0)


def test_transform_round_trip_and_shift():
    y = np.array([-500.0, 0.0, 10.0, 1e6])
    tr = ResponseTransform.for_data(y, True)
    assert tr.shift == 501.0
    assert np.allclose(tr.inverse(tr.forward(y)), y)
    assert ResponseTransform.for_data(np.array([1.0, 2.0]), True).shift == 0.0
    ident = ResponseTransform.for_data(y, False)
    assert np.array_equal(ident.forward(y), y)


def test_design_matrix_treatment_coding():
    ds = generate_ce_fixture(100, seed=0)
    X, names = design_matrix(ds, ["Age", "Urban"])
    assert X.shape == (100, 1 + 4 + 1)
    assert names[:2] == ["(Intercept)", "Age=2"]
    assert np.array_equal(X[:, 5], (ds.codes["Urban"] == 1).astype(float))
    with pytest.raises(KeyError):
        design_matrix(ds, ["nope"])


def test_mixture_synthesis_replaces_only_sensitive_column():
    ds = generate_ce_fixture(300, seed=2)
    X, _ = design_matrix(ds, ["Gender"])
    draws = _point_mass_mixture(10, np.array([[10.0, 0.5]]), np.array([0.1]), ds.n)
    tr = ResponseTransform.for_data(ds.y, True)
    sset = generate_mixture_synthetic(draws, ds, 4, 123, X, tr, {"scheme": "unit"})
    assert sset.L == 4 and sset.seed == 123 and sset.draw_indices == (0, 3, 6, 9)
    for d in sset.datasets:
        assert d.same_nonsensitive(ds)
        assert not np.array_equal(d.y, ds.y)
    # log-scale mean 10 (+0.5 for Gender=2): medians near exp(10) and exp(10.5), less the shift
    g = ds.codes["Gender"]
    y = sset.pooled_y().reshape(4, -1)
    assert np.median(y[:, g == 0] + tr.shift) == pytest.approx(np.exp(10), rel=0.03)
    assert np.median(y[:, g == 1] + tr.shift) == pytest.approx(np.exp(10.5), rel=0.03)


def test_mixture_synthesis_reproducible():
    ds = make_dataset(np.arange(1, 51, dtype=float))
    X = np.ones((50, 1))
    draws = _point_mass_mixture(20, np.array([[3.0], [30.0]]), np.array([1.0, 1.0]), 50)
    a = generate_mixture_synthetic(draws, ds, 5, 7, X)
    b = generate_mixture_synthetic(draws, ds, 5, 7, X)
    assert all(np.array_equal(x.y, y.y) for x, y in zip(a.datasets, b.datasets))
    c = generate_mixture_synthetic(draws, ds, 5, 8, X)
    assert not np.array_equal(a.datasets[0].y, c.datasets[0].y)


def test_labels_refreshed_from_conditional():
    # two well separated kernels: each record stays with the kernel near its own value
    y = np.array([0.0] * 20 + [100.0] * 20)
    ds = make_dataset(y)
    draws = _point_mass_mixture(5, np.array([[0.0], [100.0]]), np.array([1.0, 1.0]), 40)
    sset = generate_mixture_synthetic(draws, ds, 2, 0, np.ones((40, 1)))
    for d in sset.datasets:
        assert np.all(np.abs(d.y[:20]) < 10) and np.all(np.abs(d.y[20:] - 100) < 10)


def test_nb_synthesis_counts():
    ds = make_dataset(np.zeros(2000))
    S = 10
    draws = NBDraws(np.full(S, 100.0), np.full(S, 20.0), np.zeros(S, dtype=int), NBConfig(), {}, {})
    sset = generate_nb_synthetic(draws, ds, 3, 1)
    y = sset.pooled_y()
    assert np.all(y == np.round(y)) and np.all(y >= 0)
    assert y.mean() == pytest.approx(100, rel=0.03)
    assert y.var() == pytest.approx(600, rel=0.15)


def test_synthetic_set_file_round_trip(tmp_path):
    ds = generate_ce_fixture(120, seed=1)
    draws = _point_mass_mixture(4, np.array([[9.0]]), np.array([0.5]), ds.n)
    sset = generate_mixture_synthetic(draws, ds, 2, 5, np.ones((ds.n, 1)),
                                      ResponseTransform.for_data(ds.y, True), {"scheme": "marginal"})
    m = write_synthetic_set(sset, tmp_path / "syn")
    back = read_synthetic_set(m)
    assert back.L == 2 and back.seed == 5 and back.provenance == {"scheme": "marginal"}
    assert back.draw_indices == sset.draw_indices
    for a, b in zip(sset.datasets, back.datasets):
        assert np.array_equal(a.y, b.y) and a.same_nonsensitive(b)
