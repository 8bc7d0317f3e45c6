import warnings

import numpy as np
import pytest
from scipy import stats

from chainimp.regressors import (
    ETA_CLAMP,
    IRLS_TOL,
    ConvergenceError,
    GlmFit,
    RankDeficientError,
    SeparationWarning,
    _score_hessian,
    draw_glm_params,
    draw_glm_predictive,
    draw_linear_params,
    draw_linear_predictive,
    fit_glm,
    fit_linear,
)


def _design(rng, n, p):
    return np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])


# -- linear ------------------------------------------------------------------


def test_intercept_only_mean_fit():
    fit = fit_linear(np.ones((3, 1)), np.array([1.0, 2.0, 3.0]))
    assert fit.beta_hat[0] == pytest.approx(2.0)
    assert fit.rss == pytest.approx(2.0)


def test_exact_line():
    x = np.arange(1.0, 6.0)
    fit = fit_linear(np.column_stack([np.ones(5), x]), 3 * x)
    np.testing.assert_allclose(fit.beta_hat, [0.0, 3.0], atol=1e-12)
    assert fit.rss == pytest.approx(0.0, abs=1e-20)


def test_matches_normal_equations_oracle():
    rng = np.random.default_rng(0)
    X = _design(rng, 50, 4)
    y = X @ [1.0, -2.0, 0.5, 3.0] + rng.standard_normal(50)
    fit = fit_linear(X, y)
    xtx = X.T @ X
    beta = np.linalg.solve(xtx, X.T @ y)
    np.testing.assert_allclose(fit.beta_hat, beta, rtol=1e-8)
    np.testing.assert_allclose(fit.xtx_inv, np.linalg.inv(xtx), rtol=1e-8, atol=1e-12)
    assert fit.rss == pytest.approx(np.sum((y - X @ beta) ** 2), rel=1e-10)


def test_rank_deficient_and_short_designs():
    rng = np.random.default_rng(1)
    X = _design(rng, 20, 3)
    with pytest.raises(RankDeficientError):
        fit_linear(np.column_stack([X, X[:, 1] + X[:, 2]]), rng.standard_normal(20))
    with pytest.raises(ValueError):
        fit_linear(X[:3], np.ones(3))


def test_bounded_draws_stay_in_bounds():
    rng = np.random.default_rng(2)
    X = _design(rng, 40, 2)
    fit = fit_linear(X, X @ [15.0, 2.0] + 3 * rng.standard_normal(40))
    x_new = np.tile([1.0, 0.3], (100000, 1))
    y = draw_linear_predictive(fit, x_new, rng, 10.0, 20.0)
    assert np.all((y >= 10) & (y <= 20))


def test_degenerate_variance_concentrates():
    rng = np.random.default_rng(3)
    fit = fit_linear(np.ones((20, 1)), np.zeros(20))
    draws = np.concatenate([draw_linear_predictive(fit, np.ones((10, 1)), rng) for _ in range(1000)])
    assert abs(draws.mean()) < 0.01
    assert np.all(np.isfinite(draws))


def test_posterior_moments():
    rng = np.random.default_rng(4)
    X = _design(rng, 30, 3)
    fit = fit_linear(X, X @ [1.0, 2.0, -1.0] + rng.standard_normal(30))
    betas = np.array([draw_linear_params(fit, rng)[0] for _ in range(20000)])
    cov = fit.rss / (fit.n - fit.p - 2) * fit.xtx_inv
    se = np.sqrt(np.diag(cov) / len(betas))
    assert np.all(np.abs(betas.mean(axis=0) - fit.beta_hat) < 4 * se)
    np.testing.assert_allclose(np.cov(betas.T), cov, rtol=0.1, atol=0.05 * np.abs(cov).max())


def test_linear_combination_matches_scaled_t():
    rng = np.random.default_rng(5)
    X = _design(rng, 30, 3)
    fit = fit_linear(X, X @ [0.5, 1.0, -2.0] + rng.standard_normal(30))
    x_new = np.array([1.0, 0.7, -1.2])
    draws = np.array([x_new @ draw_linear_params(fit, rng)[0] for _ in range(10000)])
    s2 = fit.rss / (fit.n - fit.p)
    scale = np.sqrt(s2 * x_new @ fit.xtx_inv @ x_new)
    ref = stats.t(df=fit.n - fit.p, loc=x_new @ fit.beta_hat, scale=scale)
    assert stats.kstest(draws, ref.cdf).pvalue > 0.01


# -- GLMs -------------------------------------------------------------------


def _newton_oracle(X, y, iters=100):
    b = np.zeros(X.shape[1])
    for _ in range(iters):
        mu = 1 / (1 + np.exp(-X @ b))
        g = X.T @ (y - mu)
        H = X.T @ (X * (mu * (1 - mu))[:, None])
        b = b + np.linalg.solve(H, g)
    return b, np.linalg.inv(H)


def test_balanced_intercept_only_bernoulli():
    fit = fit_glm(np.ones((10, 1)), np.array([0, 1] * 5, float), "bernoulli")
    assert fit.beta_hat[0] == pytest.approx(0.0, abs=1e-12)


def test_bernoulli_matches_newton_oracle():
    rng = np.random.default_rng(6)
    X = _design(rng, 500, 3)
    y = (rng.random(500) < 1 / (1 + np.exp(-X @ [-0.5, 1.0, 2.0]))).astype(float)
    fit = fit_glm(X, y, "bernoulli")
    beta, cov = _newton_oracle(X, y)
    np.testing.assert_allclose(fit.beta_hat, beta, atol=1e-6)
    np.testing.assert_allclose(fit.cov_hat, cov, rtol=1e-6)
    assert fit.converged and not fit.ridge


def test_separation_takes_ridge_path():
    x = np.arange(-5.0, 5.0)
    X = np.column_stack([np.ones(10), x])
    with pytest.warns(SeparationWarning):
        fit = fit_glm(X, (x > 0).astype(float), "bernoulli")
    assert fit.ridge
    assert np.all(np.isfinite(fit.beta_hat))
    assert fit.beta_hat[1] > 0


def test_poisson_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(7)
    X = _design(rng, 400, 3)
    y = rng.poisson(np.exp(X @ [1.0, 0.3, -0.2])).astype(float)
    fit = fit_glm(X, y, "poisson")
    ref = sm.GLM(y, X, family=sm.families.Poisson()).fit(tol=1e-14)
    np.testing.assert_allclose(fit.beta_hat, ref.params, atol=1e-6)
    np.testing.assert_allclose(fit.cov_hat, ref.cov_params(), rtol=1e-5)


def test_multinomial_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(8)
    X = _design(rng, 600, 3)
    eta = X @ np.array([[0.2, -0.3], [1.0, -1.0], [0.5, 0.8]])
    full = np.column_stack([np.zeros(600), eta])
    p = np.exp(full) / np.exp(full).sum(axis=1, keepdims=True)
    y = (rng.random(600)[:, None] > np.cumsum(p, axis=1)).sum(axis=1).astype(float)
    fit = fit_glm(X, y, "multinomial", n_classes=3)
    ref = sm.MNLogit(y, X).fit(disp=0, method="newton", tol=1e-14, maxiter=100)
    np.testing.assert_allclose(fit.beta_hat, ref.params, atol=1e-6)
    np.testing.assert_allclose(fit.cov_hat, ref.cov_params(), rtol=1e-5, atol=1e-10)


def test_cov_symmetric_psd_and_score_small():
    rng = np.random.default_rng(9)
    X = _design(rng, 300, 3)
    y = (rng.random(300) < 0.3).astype(float)
    fit = fit_glm(X, y, "bernoulli")
    np.testing.assert_allclose(fit.cov_hat, fit.cov_hat.T)
    assert np.linalg.eigvalsh(fit.cov_hat).min() >= -1e-12
    score, _ = _score_hessian("bernoulli", X, y, fit.beta_hat, np.zeros(3))
    assert np.max(np.abs(score)) < 1e-6


def test_row_order_and_rescaling_invariance():
    rng = np.random.default_rng(10)
    X = _design(rng, 300, 3)
    y = (rng.random(300) < 1 / (1 + np.exp(-X @ [0.1, 1.0, -0.5]))).astype(float)
    base = fit_glm(X, y, "bernoulli").beta_hat
    perm = rng.permutation(300)
    np.testing.assert_allclose(fit_glm(X[perm], y[perm], "bernoulli").beta_hat, base, atol=1e-8)
    Xs = X.copy()
    Xs[:, 1] /= 10
    scaled = fit_glm(Xs, y, "bernoulli").beta_hat
    assert scaled[1] == pytest.approx(10 * base[1], abs=1e-6)


def test_invalid_responses():
    X = np.ones((4, 1))
    with pytest.raises(ValueError):
        fit_glm(X, np.array([0, 1, 2, 1.0]), "bernoulli")
    with pytest.raises(ValueError):
        fit_glm(X, np.array([0, 1.5, 2, 1.0]), "poisson")
    with pytest.raises(ValueError):
        fit_glm(X, np.ones(4), "gamma")


def test_non_convergence_raises():
    rng = np.random.default_rng(11)
    X = _design(rng, 200, 3)
    y = (rng.random(200) < 0.5).astype(float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ConvergenceError):
            fit_glm(X, y, "bernoulli", max_iter=1)


def test_bernoulli_draw_rate():
    fit = GlmFit(np.zeros(1), np.zeros((1, 1)), "bernoulli", True, 0)
    draws = draw_glm_predictive(fit, np.ones((10000, 1)), np.random.default_rng(12))
    assert draws.mean() == pytest.approx(0.5, abs=0.02)


def test_poisson_draw_mean():
    rng = np.random.default_rng(13)
    y = rng.poisson(4.0, 5000).astype(float)
    fit = fit_glm(np.ones((5000, 1)), y, "poisson")
    draws = draw_glm_predictive(fit, np.ones((10000, 1)), rng)
    assert draws.mean() == pytest.approx(y.mean(), abs=0.1)


def test_multinomial_dominant_class():
    rng = np.random.default_rng(14)
    y = np.where(rng.random(4000) < 0.95, 2, rng.integers(0, 2, 4000)).astype(float)
    fit = fit_glm(np.ones((4000, 1)), y, "multinomial", n_classes=3)
    draws = draw_glm_predictive(fit, np.ones((10000, 1)), rng)
    assert np.mean(draws == 2) == pytest.approx(0.95, abs=0.02)
    assert set(np.unique(draws)) <= {0.0, 1.0, 2.0}


def test_extreme_linear_predictor_clamped():
    fit = GlmFit(np.array([0.0, 1.0]), np.zeros((2, 2)), "poisson", True, 0)
    x = np.array([[1.0, 1e6], [1.0, np.inf], [1.0, -np.inf]])
    draws = draw_glm_predictive(fit, x, np.random.default_rng(15))
    assert np.all(np.isfinite(draws))
    assert draws[2] == 0.0
    assert ETA_CLAMP == 30 and IRLS_TOL == 1e-8


def test_glm_param_draw_moments():
    rng = np.random.default_rng(16)
    cov = np.array([[0.04, 0.01], [0.01, 0.09]])
    fit = GlmFit(np.array([0.5, -1.0]), cov, "bernoulli", True, 0)
    draws = np.array([draw_glm_params(fit, rng) for _ in range(20000)])
    np.testing.assert_allclose(draws.mean(axis=0), [0.5, -1.0], atol=0.01)
    np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.005)
