import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import stats

from chainimp.inference import mean_estimate, ols, pool_regression, pool_scalar

reals = st.floats(-1e3, 1e3, allow_nan=False)
positive = st.floats(1e-6, 1e3, allow_nan=False)


def test_hand_computed_fixture():
    e = pool_scalar([1.0, 3.0], [1.0, 1.0])
    assert (e.q_bar, e.w, e.b, e.t, e.fmi, e.m) == (2.0, 1.0, 2.0, 4.0, 0.75, 2)
    assert e.df == pytest.approx(1 * (1 + 1 / 3) ** 2)


def test_equal_estimates():
    e = pool_scalar([2.5] * 5, [0.3] * 5)
    assert e.b == 0 and e.fmi == 0 and e.t == e.w and np.isinf(e.df)


def test_single_estimate_needs_opt_in():
    with pytest.raises(ValueError):
        pool_scalar([1.0], [1.0])
    e = pool_scalar([1.0], [4.0], allow_single=True)
    assert e.b == 0 and e.t == 4.0
    assert e.interval() == pytest.approx((1 - 1.959963984540054 * 2, 1 + 1.959963984540054 * 2))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        pool_scalar([1, 2], [1])
    with pytest.raises(ValueError):
        pool_scalar([1, 2], [1, -1])
    with pytest.raises(ValueError):
        pool_scalar([], [])


@given(st.lists(st.tuples(reals, positive), min_size=2, max_size=20))
def test_identities(pairs):
    q, u = map(np.array, zip(*pairs))
    e = pool_scalar(q, u)
    m = len(q)
    assert e.b >= 0
    assert e.t == pytest.approx(e.w + (1 + 1 / m) * e.b, rel=1e-12, abs=1e-12)
    assert 0 <= e.fmi < 1
    if e.b > 0:
        assert e.fmi == pytest.approx((1 + 1 / m) * e.b / e.t, rel=1e-12)
    else:
        assert e.fmi == 0 and e.t == e.w


@given(st.lists(st.tuples(reals, positive), min_size=2, max_size=10), st.floats(1e-3, 1e3))
def test_fmi_scale_invariant(pairs, c):
    q, u = map(np.array, zip(*pairs))
    assume(np.ptp(q) > 1e-6)
    a = pool_scalar(q, u)
    b = pool_scalar(c * q, (c**2) * u)
    assert b.fmi == pytest.approx(a.fmi, rel=1e-9, abs=1e-12)


@given(positive, st.floats(0.01, 10), st.floats(0.01, 10))
def test_fmi_increases_in_b(w, s1, ds):
    a = pool_scalar([0.0, s1], [w, w])
    b = pool_scalar([0.0, s1 + ds], [w, w])
    assert b.fmi > a.fmi


def test_interval_uses_t_quantile():
    e = pool_scalar([1.0, 2.0, 1.5], [0.2, 0.2, 0.2])
    lo, hi = e.interval()
    q = stats.t.ppf(0.975, e.df)
    assert hi - e.q_bar == pytest.approx(q * np.sqrt(e.t))
    assert e.q_bar - lo == pytest.approx(q * np.sqrt(e.t))


def test_identical_fits_give_normal_theory_intervals():
    coef, se = np.array([1.0, -2.0]), np.array([0.1, 0.3])
    pooled = pool_regression([(coef, se)] * 10, ["a", "b"])
    frame = pooled.frame()
    np.testing.assert_allclose(frame.ci_lo, coef - stats.norm.ppf(0.975) * se)
    np.testing.assert_allclose(frame.ci_hi, coef + stats.norm.ppf(0.975) * se)
    assert list(frame.columns) == ["estimand", "q_bar", "w", "b", "t", "fmi", "df", "ci_lo", "ci_hi"]


def test_layout_mismatch():
    with pytest.raises(ValueError):
        pool_regression([([1.0, 2.0], [1.0, 1.0]), ([1.0], [1.0])])
    with pytest.raises(ValueError):
        pool_regression([([1.0], [1.0]), ([1.0], [1.0])], names=["a", "b"])


def test_ols_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(0)
    X = rng.standard_normal((100, 2))
    y = 1 + X @ [2.0, -1.0] + rng.standard_normal(100)
    beta, se = ols(X, y)
    ref = sm.OLS(y, sm.add_constant(X)).fit()
    np.testing.assert_allclose(beta, ref.params, rtol=1e-10)
    np.testing.assert_allclose(se, ref.bse, rtol=1e-10)


def test_mean_estimate():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert mean_estimate(x) == (2.5, pytest.approx(np.var(x, ddof=1) / 4))


def test_df_saturates_for_negligible_between_variance():
    e = pool_scalar([0.0, 4.33245053417693e-83], [1.0, 1.0])
    assert e.b > 0 and np.isinf(e.df)
    lo, hi = e.interval()
    assert np.isfinite(lo) and np.isfinite(hi)
