import warnings

import numpy as np
import pytest
from scipy import stats

from chainimp.truncnorm import TruncationWarning, sample_truncated_normal, standard_truncated


@pytest.mark.parametrize("a, b", [(-1.0, 2.0), (-np.inf, -3.0), (2.5, np.inf), (5.0, 6.0), (-7.0, -6.5), (-0.1, 0.1)])
def test_matches_scipy_truncnorm(a, b):
    rng = np.random.default_rng(3)
    x = sample_truncated_normal(np.zeros(20000), np.ones(20000), np.full(20000, a), np.full(20000, b), rng)
    assert np.all((x >= a) & (x <= b))
    assert stats.kstest(x, stats.truncnorm(a, b).cdf).pvalue > 0.01


def test_unbounded_is_standard_normal():
    rng = np.random.default_rng(4)
    x = sample_truncated_normal(0.0, 1.0, np.full(50000, -np.inf), np.full(50000, np.inf), rng)
    assert abs(x.mean()) < 0.02 and abs(x.std() - 1) < 0.02


def test_location_scale():
    rng = np.random.default_rng(5)
    x = sample_truncated_normal(np.full(20000, 10.0), 2.0, 9.0, 14.0, rng)
    ref = stats.truncnorm((9 - 10) / 2, (14 - 10) / 2, loc=10, scale=2)
    assert abs(x.mean() - ref.mean()) < 0.03


def test_negligible_mass_falls_back_to_nearest_bound():
    rng = np.random.default_rng(6)
    with pytest.warns(TruncationWarning):
        x = sample_truncated_normal(np.zeros(3), 1.0, np.full(3, 10.0), np.full(3, 20.0), rng)
    assert np.all(x == 10.0)
    with pytest.warns(TruncationWarning):
        x = sample_truncated_normal(np.zeros(2), 1.0, np.full(2, -30.0), np.full(2, -12.0), rng)
    assert np.all(x == -12.0)


def test_no_warning_for_ordinary_brackets():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sample_truncated_normal(np.zeros(10), 1.0, -1.0, 1.0, np.random.default_rng(0))


def test_degenerate_interval_and_zero_sd():
    rng = np.random.default_rng(7)
    assert sample_truncated_normal(3.0, 1.0, np.array([2.0]), np.array([2.0]), rng)[0] == 2.0
    assert sample_truncated_normal(np.array([5.0]), 0.0, 0.0, 4.0, rng)[0] == 4.0


def test_empty_interval_rejected():
    with pytest.raises(ValueError):
        sample_truncated_normal(0.0, 1.0, np.array([2.0]), np.array([1.0]), np.random.default_rng(0))


def test_quantile_monotone_in_u():
    u = np.linspace(0.001, 0.999, 200)
    x, _ = standard_truncated(np.full(200, 3.0), np.full(200, 4.0), u)
    assert np.all(np.diff(x) > 0)
