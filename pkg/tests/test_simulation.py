import numpy as np
import pytest

from rwsynth.data_model import build_pattern_index
from rwsynth.simulation import (
    CE_PATTERN_VARS,
    NBMixtureSpec,
    generate_ce_fixture,
    generate_nb_mixture,
    generate_whack_a_mole_fixture,
)


def test_nb_mixture_defaults():
    ds = generate_nb_mixture(NBMixtureSpec(seed=0))
    assert ds.n == 1000
    assert np.all(ds.y >= 0) and np.all(ds.y == np.round(ds.y))
    assert 90 < ds.y.mean() < 110
    assert np.array_equal(ds.y, generate_nb_mixture(NBMixtureSpec(seed=0)).y)


def test_nb_single_component_variance_ratio():
    ds = generate_nb_mixture(NBMixtureSpec(20000, (1.0, 0.0), seed=1))
    # NB(100, 20): variance 100 + 100^2/20 = 600, six times the mean
    assert ds.y.var() / ds.y.mean() == pytest.approx(6.0, rel=0.2)


def test_nb_spec_validation():
    with pytest.raises(ValueError):
        NBMixtureSpec(theta=(0.6, 0.6))
    with pytest.raises(ValueError):
        NBMixtureSpec(mu=(0.0, 1.0))
    with pytest.raises(ValueError):
        NBMixtureSpec(n=0)


def test_ce_fixture_shape():
    ds = generate_ce_fixture(6208, seed=0)
    assert ds.n == 6208
    idx = build_pattern_index(ds, CE_PATTERN_VARS)
    assert len(idx.groups) == 40 and idx.sizes.min() >= 2
    neg = np.mean(ds.y < 0)
    assert 0.003 < neg < 0.02
    assert ds.y.min() >= -7000 and ds.y.max() <= 1_800_000
    assert np.median(ds.y) < ds.y.mean()


def test_ce_fixture_too_small():
    with pytest.raises(ValueError):
        generate_ce_fixture(39)
    with pytest.raises(ValueError):
        generate_ce_fixture(79)
    assert generate_ce_fixture(80).n == 80


def test_whack_a_mole_fixture_layout():
    ds = generate_whack_a_mole_fixture(0)
    assert ds.n == 1 + 39 + 60 + 300 + 200
    assert ds.y[0] == 1000 and ds.codes["P"][0] == 0 and ds.codes["G"][0] == 2
    spread = ds.y[1:40]
    assert spread.min() >= 250 and spread.max() <= 4000
