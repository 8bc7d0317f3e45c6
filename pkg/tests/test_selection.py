import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from chainimp.data_model import VariableSpec
from chainimp.selection import SelectionConfig, expand_dummies, forward_select, screen_collinear, variable_columns


def r2_of(y, X):
    Y = y[:, None] if y.ndim == 1 else y
    A = np.column_stack([np.ones(len(Y)), X]) if X.size else np.ones((len(Y), 1))
    beta = np.linalg.lstsq(A, Y, rcond=None)[0]
    resid = Y - A @ beta
    sst = np.sum((Y - Y.mean(axis=0)) ** 2)
    return 1 - np.sum(resid**2) / sst


def exhaustive_trace(y, X, cfg):
    """Per-step brute force: refit every candidate extension and take the best."""
    chosen, trace, current = [], [], 0.0
    while len(chosen) < cfg.max_predictors:
        best, best_r2 = None, -np.inf
        for j in range(X.shape[1]):
            if j in chosen:
                continue
            r2 = r2_of(y, X[:, chosen + [j]])
            if r2 > best_r2 + 1e-12:
                best, best_r2 = j, r2
        if best is None or best_r2 - current < cfg.min_r2_increase:
            break
        chosen.append(best)
        trace.append(best_r2)
        current = best_r2
    return chosen, trace


# -- dummy expansion -----------------------------------------------------------


def test_three_level_gives_two_indicators():
    spec = VariableSpec("c", kind="categorical", levels=("a", "b", "c"))
    m, labels = variable_columns(spec, np.array([0, 0, 0, 1, 2.0]), np.zeros(5, np.int8))
    assert m.shape == (5, 2)
    assert labels == ["c=b", "c=c"]
    assert m[:, 0].tolist() == [0, 0, 0, 1, 0]


def test_reference_is_most_frequent_level():
    spec = VariableSpec("c", kind="categorical", levels=("a", "b", "c"))
    _, labels = variable_columns(spec, np.array([2, 2, 2, 1, 0.0]), np.zeros(5, np.int8))
    assert labels == ["c=a", "c=b"]


def test_semicontinuous_indicator_and_amount():
    spec = VariableSpec("s", kind="semicontinuous", transform="cube-root")
    m, labels = variable_columns(spec, np.array([0.0, 0.0, 8.0]), np.zeros(3, np.int8))
    assert labels == ["s:nz", "s"]
    np.testing.assert_allclose(m, [[0, 0], [0, 0], [1, 2]])


def test_binary_gives_one_indicator():
    spec = VariableSpec("b", kind="categorical", levels=("y", "n"))
    m, _ = variable_columns(spec, np.array([0, 1, 0.0]), np.zeros(3, np.int8))
    assert m.shape == (3, 1)


def test_not_applicable_gets_indicator():
    spec = VariableSpec("v")
    m, labels = variable_columns(spec, np.array([1.0, np.nan, 3.0]), np.array([0, 2, 0], np.int8))
    assert labels == ["v", "v:na"]
    np.testing.assert_allclose(m, [[1, 0], [0, 1], [3, 0]])


def test_expand_dummies_pool():
    specs = [VariableSpec("x"), VariableSpec("c", kind="categorical", levels=("a", "b", "c"))]
    vals = np.array([[1.0, 0], [2.0, 1], [3.0, 2], [4.0, 0]])
    pool = expand_dummies(specs, vals, np.zeros(vals.shape, np.int8))
    assert pool.labels == ["x", "c=b", "c=c"]
    assert pool.sources == ["x", "c", "c"]
    assert pool.take([0, 2]).labels == ["x", "c=c"]


# -- collinearity ---------------------------------------------------------------


def test_sum_column_dropped():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((2, 50))
    retained, dropped = screen_collinear(np.column_stack([A, B, A + B]))
    assert retained == [0, 1] and dropped == [2]


def test_orthogonal_columns_kept():
    Q = np.linalg.qr(np.random.default_rng(1).standard_normal((30, 5)))[0]
    Q -= Q.mean(axis=0)
    retained, dropped = screen_collinear(Q)
    assert dropped == []


def test_constant_and_zero_columns_dropped():
    rng = np.random.default_rng(2)
    X = np.column_stack([rng.standard_normal(20), np.full(20, 3.0), np.zeros(20)])
    assert screen_collinear(X) == ([0], [1, 2])


def test_planted_dependencies_match_exact_rank():
    rng = np.random.default_rng(3)
    base = rng.integers(-5, 6, size=(60, 17))
    deps = [base[:, 0] + base[:, 1], 2 * base[:, 2] - base[:, 5], base[:, 3] + base[:, 4] - base[:, 6]]
    X = np.column_stack([base[:, :6], deps[0], base[:, 6:12], deps[1], base[:, 12:], deps[2]]).astype(float)
    assert X.shape[1] == 20
    _, dropped = screen_collinear(X)
    exact_rank = sympy.Matrix(np.column_stack([np.ones(60, int), X.astype(int)]).tolist()).rank()
    assert len(dropped) == 3
    assert len(dropped) == X.shape[1] + 1 - exact_rank
    assert dropped == [6, 13, 19]


def test_wide_input():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((5, 8))
    retained, dropped = screen_collinear(X)
    assert len(retained) == 4
    assert np.linalg.matrix_rank(np.column_stack([np.ones(5), X[:, retained]])) == 5


# -- forward selection ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(6))
def test_greedy_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    n, k = 200, int(rng.integers(3, 13))
    X = rng.standard_normal((n, k)) @ rng.standard_normal((k, k)) * 0.5 + rng.standard_normal((n, k))
    y = X @ (rng.normal(0, 1, k) * rng.random(k)) + rng.standard_normal(n) * 2
    cfg = SelectionConfig(min_r2_increase=0.005, max_predictors=10)
    res = forward_select(y, X, cfg)
    chosen, trace = exhaustive_trace(y, X, cfg)
    assert res.selected == chosen
    np.testing.assert_allclose(res.r2_trace, trace, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 10))
def test_greedy_matches_exhaustive_property(seed, k, cap):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((80, k))
    y = X @ rng.standard_normal(k) + rng.standard_normal(80)
    cfg = SelectionConfig(max_predictors=cap)
    res = forward_select(y, X, cfg)
    chosen, trace = exhaustive_trace(y, X, cfg)
    assert res.selected == chosen
    np.testing.assert_allclose(res.r2_trace, trace, atol=1e-9)


def test_single_signal_among_noise():
    rng = np.random.default_rng(7)
    n = 5000
    X = rng.standard_normal((n, 10))
    y = X[:, 4] + rng.standard_normal(n)  # R^2 = 0.5
    res = forward_select(y, X)
    assert res.selected == [4]
    assert res.r2 == pytest.approx(0.5, abs=0.03)
    for j in range(10):
        if j != 4:
            assert r2_of(y, X[:, [4, j]]) - r2_of(y, X[:, [4]]) < 0.005


def test_cap_at_ten():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((3000, 12))
    y = X.sum(axis=1) + 0.5 * rng.standard_normal(3000)
    assert len(forward_select(y, X).selected) == 10


def test_empty_pool_and_constant_response():
    y = np.random.default_rng(9).standard_normal(10)
    assert forward_select(y, np.empty((10, 0))).selected == []
    assert forward_select(np.ones(10), np.random.default_rng(0).standard_normal((10, 3))).selected == []


def test_ties_go_to_pool_order():
    rng = np.random.default_rng(10)
    x = rng.standard_normal(100)
    y = x + rng.standard_normal(100)
    assert forward_select(y, np.column_stack([x, x, x])).selected == [0]


def test_pooled_r2_for_indicator_matrix():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((400, 4))
    cls = np.argmax(X[:, :3] + rng.standard_normal((400, 3)), axis=1)
    Y = (cls[:, None] == np.arange(3)).astype(float)
    res = forward_select(Y, X)
    chosen, trace = exhaustive_trace(Y, X, SelectionConfig())
    assert res.selected == chosen
    np.testing.assert_allclose(res.r2_trace, trace, atol=1e-9)


def test_deterministic():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((100, 8))
    y = X @ rng.standard_normal(8) + rng.standard_normal(100)
    assert forward_select(y, X).selected == forward_select(y.copy(), X.copy()).selected


@pytest.mark.parametrize("kw", [{"min_r2_increase": 0.0}, {"min_r2_increase": 1.0}, {"max_predictors": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SelectionConfig(**kw)
