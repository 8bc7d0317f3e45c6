"""Per-type regression fits and posterior-predictive imputation draws.

Linear models use the exact flat-prior posterior (scaled inverse chi-square
for the variance, normal for the coefficients). Bernoulli, multinomial and
Poisson models are fitted by IRLS and their coefficient posterior is
approximated by the asymptotic normal at the MLE.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .truncnorm import sample_truncated_normal

RANK_TOL = 1e-10
RIDGE_LAMBDA = 1e-4
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50
ETA_CLAMP = 30.0


class RankDeficientError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    pass


class SeparationWarning(UserWarning):
    """Separation detected; the fit fell back to a weak ridge penalty."""


@dataclass
class LinearFit:
    beta_hat: np.ndarray
    xtx_inv_factor: np.ndarray  # F with F @ F.T == inv(X.T X); upper triangular up to column pivoting
    rss: float
    n: int
    p: int

    @property
    def xtx_inv(self) -> np.ndarray:
        return self.xtx_inv_factor @ self.xtx_inv_factor.T


@dataclass
class GlmFit:
    beta_hat: np.ndarray  # (p,) or (p, K-1) for multinomial
    cov_hat: np.ndarray  # covariance of beta_hat.ravel(order="F")
    family: str
    converged: bool
    iterations: int
    ridge: bool = False
    n_classes: int = 2

    @property
    def p(self) -> int:
        return self.beta_hat.shape[0]


def fit_linear(X: np.ndarray, y: np.ndarray) -> LinearFit:
    """Least squares via column-pivoted QR.

    Raises RankDeficientError if a pivot falls below ``RANK_TOL`` relative to
    the largest, which means upstream collinearity screening missed a column.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more rows than columns (n={n}, p={p})")
    q, r, piv = sla.qr(X, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(r))
    if d[0] == 0 or d[-1] < RANK_TOL * d[0]:
        raise RankDeficientError(f"design matrix is rank deficient (min pivot ratio {d[-1] / max(d[0], 1e-300):.2e})")
    qty = q.T @ y
    beta_p = sla.solve_triangular(r, qty, check_finite=False)
    beta = np.empty(p)
    beta[piv] = beta_p
    r_inv = sla.solve_triangular(r, np.eye(p), check_finite=False)
    factor = np.empty((p, p))
    factor[piv] = r_inv
    resid = y - X @ beta
    return LinearFit(beta, factor, float(resid @ resid), n, p)


def draw_linear_params(fit: LinearFit, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """One draw of (beta, sigma) from the flat-prior posterior."""
    dof = fit.n - fit.p
    if dof < 1:
        raise ValueError("posterior draw needs n - p >= 1")
    # ridge guard: keep sigma > 0 when the fit is exact
    rss = max(fit.rss, 1e-12 * max(1.0, fit.n))
    sigma2 = rss / rng.chisquare(dof)
    sigma = np.sqrt(sigma2)
    beta = fit.beta_hat + sigma * (fit.xtx_inv_factor @ rng.standard_normal(fit.p))
    return beta, sigma


def draw_linear_predictive(fit: LinearFit, x_new, rng: np.random.Generator,
                           lower=None, upper=None) -> np.ndarray:
    """Posterior-predictive draws for rows of ``x_new``, optionally truncated.

    A single (beta, sigma) draw is shared by all rows; each row then gets
    independent residual noise.
    """
    x_new = np.atleast_2d(np.asarray(x_new, float))
    beta, sigma = draw_linear_params(fit, rng)
    mean = x_new @ beta
    if lower is None and upper is None:
        return mean + sigma * rng.standard_normal(len(mean))
    lo = np.full(len(mean), -np.inf) if lower is None else np.broadcast_to(np.asarray(lower, float), mean.shape)
    hi = np.full(len(mean), np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), mean.shape)
    return sample_truncated_normal(mean, np.full(len(mean), sigma), lo, hi, rng)


# ---------------------------------------------------------------------------
# GLMs
# ---------------------------------------------------------------------------


def _softmax_probs(eta: np.ndarray) -> np.ndarray:
    # eta: (n, K-1), baseline class 0 has eta = 0
    full = np.column_stack([np.zeros(len(eta)), eta])
    full -= full.max(axis=1, keepdims=True)
    e = np.exp(full)
    return e / e.sum(axis=1, keepdims=True)


def _loglik(family, X, y, beta, penalty):
    coef = beta.reshape(X.shape[1], -1, order="F") if family == "multinomial" else beta
    eta = np.clip(X @ coef, -ETA_CLAMP * 10, ETA_CLAMP * 10)
    if family == "bernoulli":
        ll = np.sum(y * eta - np.logaddexp(0.0, eta))
    elif family == "poisson":
        ll = np.sum(y * eta - np.exp(eta))
    else:
        full = np.column_stack([np.zeros(len(eta)), eta])
        lse = np.logaddexp.reduce(full, axis=1)
        ll = np.sum(full[np.arange(len(y)), y.astype(int)] - lse)
    return ll - 0.5 * np.sum(penalty * beta**2)


def _score_hessian(family, X, y, beta, penalty):
    if family == "bernoulli":
        eta = X @ beta
        mu = 0.5 * (1.0 + np.tanh(0.5 * eta))
        w = mu * (1.0 - mu)
        score = X.T @ (y - mu) - penalty * beta
        hess = (X * w[:, None]).T @ X + np.diag(penalty)
        return score, hess
    if family == "poisson":
        eta = X @ beta
        mu = np.exp(np.clip(eta, -700, 700))
        score = X.T @ (y - mu) - penalty * beta
        hess = (X * mu[:, None]).T @ X + np.diag(penalty)
        return score, hess
    # multinomial: beta is (p, K-1) flattened column-major
    n, p = X.shape
    k1 = beta.size // p
    B = beta.reshape(p, k1, order="F")
    P = _softmax_probs(X @ B)[:, 1:]
    Y = np.zeros((n, k1))
    idx = y.astype(int)
    rows = idx > 0
    Y[np.nonzero(rows)[0], idx[rows] - 1] = 1.0
    score = (X.T @ (Y - P)).ravel(order="F") - penalty * beta
    hess = np.empty((p * k1, p * k1))
    for a in range(k1):
        for b in range(a, k1):
            w = P[:, a] * ((a == b) - P[:, b])
            blk = (X * w[:, None]).T @ X
            hess[a * p:(a + 1) * p, b * p:(b + 1) * p] = blk
            hess[b * p:(b + 1) * p, a * p:(a + 1) * p] = blk
    hess += np.diag(penalty)
    return score, hess


def _newton(family, X, y, beta0, penalty, max_iter):
    beta = beta0.copy()
    ll = _loglik(family, X, y, beta, penalty)
    for it in range(1, max_iter + 1):
        score, hess = _score_hessian(family, X, y, beta, penalty)
        if np.max(np.abs(score)) < IRLS_TOL:
            return beta, hess, True, it - 1
        try:
            step = sla.solve(hess, score, assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(hess, score, rcond=None)[0]
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            ll_new = _loglik(family, X, y, cand, penalty)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = cand, ll_new
    score, hess = _score_hessian(family, X, y, beta, penalty)
    return beta, hess, bool(np.max(np.abs(score)) < IRLS_TOL), max_iter


def fit_glm(X: np.ndarray, y: np.ndarray, family: str, n_classes: int | None = None,
            max_iter: int = IRLS_MAX_ITER) -> GlmFit:
    """Maximum likelihood by IRLS (Newton with step halving).

    ``family`` is ``"bernoulli"``, ``"poisson"`` or ``"multinomial"`` (class
    labels 0..K-1, baseline-category logits against class 0). Columns are
    rescaled internally so the convergence tolerance is scale free. When
    the unpenalized fit diverges (separation), it is refitted with a ridge
    penalty of ``RIDGE_LAMBDA`` on the non-intercept coefficients and a
    :class:`SeparationWarning` is issued. The first column of ``X`` is taken
    to be the intercept.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    if family == "bernoulli":
        if np.any((y != 0) & (y != 1)):
            raise ValueError("bernoulli response must be 0/1")
        k1 = 1
    elif family == "poisson":
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("poisson response must be non-negative integers")
        k1 = 1
    elif family == "multinomial":
        n_classes = int(n_classes or (y.max() + 1))
        if np.any((y < 0) | (y >= n_classes) | (y != np.round(y))):
            raise ValueError("multinomial response must be class indices")
        k1 = n_classes - 1
    else:
        raise ValueError(f"unknown family {family!r}")

    scale = np.max(np.abs(X), axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    scale_full = np.tile(scale, k1)

    beta0 = np.zeros(p * k1)
    if family == "poisson":
        beta0[0] = np.log(max(y.mean(), 1e-8)) * scale[0]
    penalty = np.zeros(p * k1)
    beta, hess, converged, iters = _newton(family, Xs, y, beta0, penalty, max_iter)
    eta = Xs @ beta.reshape(p, k1, order="F")
    ridge = not converged or (family != "poisson" and np.max(np.abs(eta)) > ETA_CLAMP)
    if ridge:
        penalty = np.full(p * k1, RIDGE_LAMBDA)
        penalty[0::p] = 0.0  # intercepts unpenalized
        beta, hess, converged, iters = _newton(family, Xs, y, beta0, penalty, max_iter)
        warnings.warn("separation detected; refitted with a weak ridge penalty", SeparationWarning,
                      stacklevel=2)
    if not converged:
        raise ConvergenceError(f"{family} IRLS did not converge in {max_iter} iterations")
    cov_s = np.linalg.pinv(hess, hermitian=True)
    cov_s = 0.5 * (cov_s + cov_s.T)
    beta_orig = beta / scale_full
    cov = cov_s / np.outer(scale_full, scale_full)
    beta_out = beta_orig.reshape(p, k1, order="F") if family == "multinomial" else beta_orig
    return GlmFit(beta_out, cov, family, converged, iters, ridge,
                  n_classes=k1 + 1 if family == "multinomial" else 2)


def draw_glm_params(fit: GlmFit, rng: np.random.Generator) -> np.ndarray:
    """beta* ~ Normal(beta_hat, cov_hat)."""
    flat = fit.beta_hat.ravel(order="F")
    vals, vecs = np.linalg.eigh(fit.cov_hat)
    vals = np.clip(vals, 0.0, None)
    draw = flat + vecs @ (np.sqrt(vals) * rng.standard_normal(len(vals)))
    return draw.reshape(fit.beta_hat.shape, order="F")


def draw_glm_predictive(fit: GlmFit, x_new, rng: np.random.Generator) -> np.ndarray:
    """Posterior-predictive category indices (or counts) for rows of ``x_new``."""
    x_new = np.atleast_2d(np.asarray(x_new, float))
    beta = draw_glm_params(fit, rng)
    eta = x_new @ beta
    eta = np.clip(np.nan_to_num(eta, nan=0.0, posinf=ETA_CLAMP, neginf=-ETA_CLAMP), -ETA_CLAMP, ETA_CLAMP)
    if fit.family == "bernoulli":
        prob = 1.0 / (1.0 + np.exp(-eta))
        return (rng.random(len(eta)) < prob).astype(float)
    if fit.family == "poisson":
        return rng.poisson(np.exp(eta)).astype(float)
    probs = _softmax_probs(np.atleast_2d(eta).reshape(len(x_new), -1))
    cum = np.cumsum(probs, axis=1)
    u = rng.random(len(x_new))[:, None]
    return np.minimum((u > cum).sum(axis=1), probs.shape[1] - 1).astype(float)
