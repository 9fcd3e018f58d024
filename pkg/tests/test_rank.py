import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from stigmascan.errors import ConstantInput, LengthMismatch
from stigmascan.stats import average_ranks, spearman


def brute_ranks(values):
    """Mean position over all orderings that sort the values."""
    n = len(values)
    totals = [0.0] * n
    count = 0
    for perm in itertools.permutations(range(n)):
        if all(values[perm[i]] <= values[perm[i + 1]] for i in range(n - 1)):
            count += 1
            for pos, idx in enumerate(perm):
                totals[idx] += pos + 1
    return [t / count for t in totals]


def pearson(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    da, db = a - a.mean(), b - b.mean()
    return float(np.sum(da * db) / math.sqrt(np.sum(da * da) * np.sum(db * db)))


def test_hand_fixtures():
    assert spearman([1, 2, 3], [2, 4, 6]).rho == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]).rho == -1.0


def test_tied_case_brute_force():
    x, y = [1, 2, 2, 4], [1, 3, 2, 4]
    assert list(average_ranks(x)) == brute_ranks(x) == [1.0, 2.5, 2.5, 4.0]
    expected = pearson(brute_ranks(x), brute_ranks(y))
    assert abs(spearman(x, y).rho - expected) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=6))
def test_average_ranks_brute_force(values):
    assert np.allclose(average_ranks(values), brute_ranks(values), atol=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=3, max_size=30))
def test_matches_scipy_and_monotone_invariance(pairs):
    x = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    r = spearman(x, y)
    ref = sps.spearmanr(x, y)
    assert r.rho == pytest.approx(ref.statistic, abs=1e-12)
    if abs(r.rho) < 1:
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-15)
    assert -1 <= r.rho <= 1
    t = spearman([math.exp(v) for v in x], [v**3 for v in y])
    assert t.rho == pytest.approx(r.rho, abs=1e-12)


def test_errors():
    with pytest.raises(LengthMismatch):
        spearman([1, 2, 3], [1, 2])
    with pytest.raises(ConstantInput):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1, 2], [2, 1])
