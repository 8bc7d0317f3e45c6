"""Inverse-CDF sampling from normals truncated to an interval.

Works in log space in the tails so that brackets many standard deviations
from the mean are still sampled exactly.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import special

# below this probability mass the interval is treated as unreachable
NEGLIGIBLE_MASS = 1e-12


class TruncationWarning(UserWarning):
    """A bracket carried negligible predictive mass; the nearest bound was used."""


def _lower_tail_sample(a, b, u):
    # a < b <= 0 region, or any interval where the lower-tail form is stable
    log_fa = special.log_ndtr(a)
    log_fb = special.log_ndtr(b)
    # log(Phi(a) + u * (Phi(b) - Phi(a)))
    r = np.exp(log_fa - log_fb)
    log_p = log_fb + np.log(r + u * (1.0 - r))
    return special.ndtri_exp(log_p), log_fb + np.log1p(-r)


def standard_truncated(a, b, u):
    """Quantile of N(0,1) truncated to [a, b] at uniform ``u``.

    Returns ``(x, log_mass)`` arrays.
    """
    a, b, u = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(u, float))
    x = np.empty(a.shape)
    log_mass = np.empty(a.shape)
    # intervals in the upper half are reflected into the lower tail
    upper = a > 0
    lo = np.where(upper, -b, a)
    hi = np.where(upper, -a, b)
    uu = np.where(upper, 1.0 - u, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs, lm = _lower_tail_sample(lo, hi, uu)
    x[:] = np.where(upper, -xs, xs)
    log_mass[:] = lm
    return np.clip(x, a, b), log_mass


def sample_truncated_normal(mean, sd, lower, upper, rng: np.random.Generator) -> np.ndarray:
    """Draw from Normal(mean, sd) restricted to [lower, upper] by inverse CDF.

    Infinite bounds are allowed. If an interval carries less than
    ``NEGLIGIBLE_MASS`` probability, the bound nearest the mean is returned
    and a :class:`TruncationWarning` is issued.
    """
    mean, sd, lower, upper = np.broadcast_arrays(
        np.asarray(mean, float), np.asarray(sd, float), np.asarray(lower, float), np.asarray(upper, float)
    )
    if np.any(lower > upper):
        raise ValueError("empty truncation interval")
    u = rng.random(mean.shape)
    out = np.empty(mean.shape)
    point = (sd <= 0) | (lower == upper)
    degenerate = point
    if np.any(~degenerate):
        m, s = mean[~degenerate], sd[~degenerate]
        a = (lower[~degenerate] - m) / s
        b = (upper[~degenerate] - m) / s
        z, log_mass = standard_truncated(a, b, u[~degenerate])
        vals = m + s * z
        tiny = ~(log_mass >= np.log(NEGLIGIBLE_MASS))
        if np.any(tiny):
            lo, hi = lower[~degenerate][tiny], upper[~degenerate][tiny]
            vals[tiny] = np.where(np.abs(lo - m[tiny]) <= np.abs(hi - m[tiny]), lo, hi)
            warnings.warn(
                f"{int(tiny.sum())} bracket(s) with negligible predictive mass; used nearest bound",
                TruncationWarning,
                stacklevel=2,
            )
        out[~degenerate] = np.clip(vals, lower[~degenerate], upper[~degenerate])
    if np.any(degenerate):
        out[degenerate] = np.clip(mean[degenerate], lower[degenerate], upper[degenerate])
    return out
