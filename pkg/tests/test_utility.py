import itertools
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from rwsynth.data_model import Column, Dataset, Schema
from rwsynth.synth import SyntheticSet
from rwsynth.utility import (
    bootstrap_estimate,
    combine_bootstrap,
    combine_partial,
    ecdf_utility,
    ols_coefficient,
    parse_statistic,
)

from conftest import make_dataset


def test_exhaustive_bootstrap_matches_enumeration():
    y = np.array([1.0, 2.0, 6.0])
    ci = bootstrap_estimate(y, "mean", exhaustive=True, level=0.8)
    reps = [np.mean([y[i] for i in t]) for t in itertools.product(range(3), repeat=3)]
    assert len(reps) == 27
    assert ci.point == 3.0
    assert ci.lower == pytest.approx(np.quantile(reps, 0.1))
    assert ci.upper == pytest.approx(np.quantile(reps, 0.9))


def test_bootstrap_quantile_and_validation(rng):
    y = rng.normal(0, 1, 300)
    ci = bootstrap_estimate(y, "quantile(0.9)", 500, rng)
    assert ci.statistic == "quantile(0.9)" and ci.lower < ci.point < ci.upper
    with pytest.raises(ValueError):
        bootstrap_estimate(y, "mean", 100, rng)
    with pytest.raises(ValueError):
        bootstrap_estimate(np.array([]), "mean", 500, rng)
    with pytest.raises(ValueError):
        parse_statistic("mode")
    assert parse_statistic(("quantile", 0.5)) == ("quantile", 0.5)


def test_bootstrap_reproducible():
    y = np.arange(50.0)
    assert bootstrap_estimate(y, "median", 300, 4) == bootstrap_estimate(y, "median", 300, 4)


def test_ecdf_identical_and_hand_case():
    assert ecdf_utility(np.array([3.0, 1.0, 2.0]), np.array([1.0, 2.0, 3.0])).to_dict() == {"U_m": 0.0, "U_a": 0.0}
    u = ecdf_utility(np.array([1.0, 2.0]), np.array([1.0, 3.0]))
    assert u.U_m == 0.5
    assert Fraction(u.U_a).limit_denominator(1000) == Fraction(1, 12)


def test_ecdf_pools_synthetic_datasets():
    conf = make_dataset([1.0, 2.0])
    sset = SyntheticSet((conf.with_y([1.0, 3.0]), conf.with_y([2.0, 3.0])), (0, 1))
    pooled = ecdf_utility(conf, sset)
    assert pooled == ecdf_utility(conf.y, np.array([1.0, 3.0, 2.0, 3.0]))


def test_combining_rule_hand_case():
    ci = combine_partial([10.0, 14.0], [1.0, 1.0], statistic="mean")
    assert ci.point == 12.0 and ci.variance == 5.0
    df = (2 - 1) * (1 + 1 * 2 / 8) ** 2
    assert ci.df == df
    half = stats.t.ppf(0.975, df) * np.sqrt(5.0)
    assert ci.lower == pytest.approx(12 - half, abs=1e-12) and ci.upper == pytest.approx(12 + half, abs=1e-12)


def test_combining_rule_zero_between_variance():
    ci = combine_partial([3.0, 3.0, 3.0], [2.0, 2.0, 2.0])
    assert ci.variance == 2.0 and ci.df == float("inf")
    half = stats.norm.ppf(0.975) * np.sqrt(2.0)
    assert ci.lower == pytest.approx(3 - half, abs=1e-12)
    single = combine_partial([4.0], [1.0])
    assert single.variance == 1.0
    with pytest.raises(ValueError):
        combine_partial([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        combine_partial([1.0], [-1.0])


def test_combine_bootstrap_uses_per_dataset_variance(rng):
    conf = make_dataset(rng.normal(50, 5, 200))
    sset = SyntheticSet(tuple(conf.with_y(rng.normal(50 + l, 5, 200)) for l in range(4)), (0, 1, 2, 3))
    ci = combine_bootstrap(sset, "mean", 400, 1)
    assert ci.method == "combined_partial"
    assert ci.point == pytest.approx(np.mean([d.y.mean() for d in sset.datasets]))
    assert ci.variance > np.var([d.y.mean() for d in sset.datasets], ddof=1) / 4


def test_ols_dummy_coefficient_exact():
    schema = Schema((Column("G", "pattern", "categorical", ("a", "b")), Column("y", "sensitive", "continuous")))
    ds = Dataset(schema, {"G": np.array([0, 0, 0, 1, 1, 1])}, np.array([9.0, 10.0, 11.0, 16.0, 17.0, 18.0]))
    est, var = ols_coefficient(ds, ["G"], ("G", "b"))
    assert est == pytest.approx(7.0, abs=1e-12)
    # s^2 = 4 / 4 = 1; var = s^2 (1/3 + 1/3)
    assert var == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        ols_coefficient(ds, ["G"], ("G", "a"))
