"""Combining rules for estimates computed on multiply imputed datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats


@dataclass(frozen=True)
class PooledEstimate:
    q_bar: float
    w: float
    b: float
    t: float
    fmi: float
    df: float
    m: int

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        """``q_bar -/+ t_{df} * sqrt(t)``; normal quantile when df is infinite."""
        alpha = 1 - level
        q = stats.norm.ppf(1 - alpha / 2) if np.isinf(self.df) else stats.t.ppf(1 - alpha / 2, self.df)
        half = q * np.sqrt(self.t)
        return self.q_bar - half, self.q_bar + half


def pool_scalar(estimates, variances, allow_single: bool = False) -> PooledEstimate:
    """Pool one estimand over m completed datasets.

    ``w`` is the mean within variance, ``b`` the sample variance (ddof=1) of
    the estimates, ``t = w + (1 + 1/m) b`` and ``fmi = (1 + 1/m) b / t``.
    ``df = (m - 1)(1 + w / ((1 + 1/m) b))**2``, infinite when ``b = 0``.
    With ``allow_single`` a single dataset is accepted and treated as b = 0.
    """
    q = np.asarray(estimates, float).ravel()
    u = np.asarray(variances, float).ravel()
    m = q.size
    if u.size != m:
        raise ValueError("estimates and variances differ in length")
    if m == 0:
        raise ValueError("no estimates to pool")
    if m < 2 and not allow_single:
        raise ValueError("between-imputation variance needs at least 2 imputations")
    if np.any(u < 0) or not np.all(np.isfinite(u)) or not np.all(np.isfinite(q)):
        raise ValueError("variances must be finite and non-negative and estimates finite")
    q_bar = float(q.mean())
    w = float(u.mean())
    b = float(q.var(ddof=1)) if m > 1 else 0.0
    if m > 1 and np.all(q == q[0]):
        b = 0.0
    inflated = (1 + 1 / m) * b
    t = w + inflated
    fmi = inflated / t if t > 0 else 0.0
    if b > 0:
        # a vanishing b pushes df past the float range; saturate to infinity
        with np.errstate(over="ignore"):
            df = (m - 1) * np.square(np.float64(1 + w / inflated))
    else:
        df = float("inf")
    return PooledEstimate(q_bar, w, b, t, float(fmi), float(df), m)


@dataclass
class PooledRegression:
    names: list[str]
    estimates: list[PooledEstimate]
    level: float = 0.95

    def frame(self) -> pd.DataFrame:
        rows = []
        for name, e in zip(self.names, self.estimates):
            lo, hi = e.interval(self.level)
            rows.append({"estimand": name, "q_bar": e.q_bar, "w": e.w, "b": e.b, "t": e.t,
                         "fmi": e.fmi, "df": e.df, "ci_lo": lo, "ci_hi": hi})
        return pd.DataFrame(rows, columns=["estimand", "q_bar", "w", "b", "t", "fmi", "df", "ci_lo", "ci_hi"])


def pool_regression(fits, names=None, level: float = 0.95, allow_single: bool = False) -> PooledRegression:
    """Coordinate-wise pooling of ``(coefficients, standard_errors)`` pairs."""
    fits = list(fits)
    if not fits:
        raise ValueError("no fits to pool")
    coefs = [np.asarray(c, float).ravel() for c, _ in fits]
    ses = [np.asarray(s, float).ravel() for _, s in fits]
    p = coefs[0].size
    if any(c.size != p for c in coefs) or any(s.size != p for s in ses):
        raise ValueError("coefficient layouts differ across fits")
    if names is None:
        names = [f"b{i}" for i in range(p)]
    if len(names) != p:
        raise ValueError("names do not match the coefficient layout")
    C = np.vstack(coefs)
    V = np.vstack(ses) ** 2
    est = [pool_scalar(C[:, i], V[:, i], allow_single=allow_single) for i in range(p)]
    return PooledRegression(list(names), est, level)


def ols(X: np.ndarray, y: np.ndarray, add_intercept: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """OLS coefficients and classical standard errors."""
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    y = np.asarray(y, float)
    n, p = X.shape
    if n <= p:
        raise ValueError("need more rows than coefficients")
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < p:
        raise np.linalg.LinAlgError("design is rank deficient")
    resid = y - X @ beta
    sigma2 = resid @ resid / (n - p)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return beta, np.sqrt(np.diag(cov))


def mean_estimate(x: np.ndarray) -> tuple[float, float]:
    """Sample mean and its squared standard error."""
    x = np.asarray(x, float)
    return float(x.mean()), float(x.var(ddof=1) / x.size)
