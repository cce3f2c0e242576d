import numpy as np
import pytest

from rwsynth.data_model import Column, Dataset, Schema


def make_dataset(y, patterns=None, n_levels=None):
    """One categorical pattern column ``P`` (integer codes) plus sensitive ``y``."""
    y = np.asarray(y, dtype=float)
    p = np.zeros(y.size, dtype=int) if patterns is None else np.asarray(patterns, dtype=int)
    k = n_levels or int(p.max()) + 1
    schema = Schema((
        Column("P", "pattern", "categorical", tuple(f"p{i}" for i in range(k))),
        Column("y", "sensitive", "continuous"),
    ))
    return Dataset(schema, {"P": p}, y)


def naive_marginal(y_true, y_syn, groups, r):
    """Triple loop over records, pattern mates and their values; exact fractions."""
    from fractions import Fraction

    n = len(y_true)
    out = []
    for i in range(n):
        mates = [h for h in range(n) if groups[h] == groups[i]]
        rad = r * abs(y_true[i])
        outside = 0
        for h in mates:
            if abs(y_syn[h] - y_true[i]) > rad:
                outside += 1
        own = abs(y_syn[i] - y_true[i]) <= rad
        out.append(Fraction(outside, len(mates)) * (1 if own else 0))
    return out


def naive_pairwise(y, groups, r):
    from fractions import Fraction

    n = len(y)
    out = {}
    for i in range(n):
        for j in range(i + 1, n):
            if groups[i] != groups[j]:
                continue
            mates = [h for h in range(n) if groups[h] == groups[i]]
            cnt = 0
            for h in mates:
                if abs(y[h] - y[i]) > r * abs(y[i]) and abs(y[h] - y[j]) > r * abs(y[j]):
                    cnt += 1
            out[(i, j)] = Fraction(cnt, len(mates))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
