"""Comparison tables for judging imputations: summaries, FMI, correlations, agreement."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data_model import CellState
from .engine import CompletedSet
from .inference import mean_estimate, ols, pool_regression, pool_scalar
from .transforms import forward

QUANTILES = (25, 50, 75, 90, 95)
ALERT_THRESHOLD = 0.1


def _stats(x: np.ndarray) -> dict[str, float]:
    x = np.asarray(x, float)
    x = x[np.isfinite(x)]
    out = {"n": float(x.size)}
    if x.size == 0:
        return out | {k: np.nan for k in ("min", "max", "mean", "sd", *(f"p{q}" for q in QUANTILES))}
    out |= {"min": x.min(), "max": x.max(), "mean": x.mean(), "sd": x.std(ddof=1) if x.size > 1 else np.nan}
    for q, v in zip(QUANTILES, np.percentile(x, QUANTILES)):
        out[f"p{q}"] = float(v)
    return out


def rel_diff(obs: float, com: float) -> float:
    """(com - obs) / obs; NaN when obs is zero or undefined."""
    if not np.isfinite(obs) or obs == 0 or not np.isfinite(com):
        return float("nan")
    return (com - obs) / obs


def summary_compare(observed, completed) -> pd.DataFrame:
    """Descriptive statistics of observed-only vs completed values.

    ``completed`` is one array or a list of arrays (one per imputation);
    statistics of a list are averaged over its members.
    """
    obs = _stats(observed)
    tables = completed if isinstance(completed, (list, tuple)) else [completed]
    if not tables:
        raise ValueError("no completed values")
    per = [_stats(t) for t in tables]
    rows = []
    for key in obs:
        com = float(np.mean([p[key] for p in per]))
        rows.append({"statistic": key, "obs": float(obs[key]), "com": com, "rel_diff": rel_diff(obs[key], com)})
    return pd.DataFrame(rows)


def analysis_column(cs: CompletedSet, k: int, name: str, transformed: bool = False) -> np.ndarray:
    """Completed values of one variable; not-applicable cells count as 0."""
    x = cs.column(k, name, na_as_zero=True)
    spec = cs.dataset.spec(name)
    if transformed and spec.transform != "none":
        x = forward(spec.transform, x)
    return x


def observed_column(cs: CompletedSet, name: str, transformed: bool = False) -> np.ndarray:
    ds = cs.dataset
    j = ds.col(name)
    obs = ds.state[:, j] == CellState.OBSERVED
    x = ds.values[obs, j]
    if transformed and ds.variables[j].transform != "none":
        x = forward(ds.variables[j].transform, x)
    return x


def _applicable_values(cs: CompletedSet, k: int, name: str) -> np.ndarray:
    j = cs.dataset.col(name)
    keep = cs.states[k][:, j] != CellState.NOT_APPLICABLE
    return cs.values[k][keep, j]


def numeric_variables(cs: CompletedSet) -> list[str]:
    return [v.name for v in cs.dataset.variables if v.kind != "categorical" and v.eligibility != "excluded"]


def fmi_table(cs: CompletedSet, names=None) -> pd.DataFrame:
    """Pooled mean (not-applicable as 0) and its FMI per variable."""
    names = names or numeric_variables(cs)
    rows = []
    for name in names:
        ests = [mean_estimate(analysis_column(cs, k, name)) for k in range(cs.m)]
        e = pool_scalar([q for q, _ in ests], [u for _, u in ests], allow_single=True)
        lo, hi = e.interval()
        rows.append({"variable": name, "q_bar": e.q_bar, "w": e.w, "b": e.b, "t": e.t, "fmi": e.fmi,
                     "df": e.df, "ci_lo": lo, "ci_hi": hi})
    return pd.DataFrame(rows, columns=["variable", "q_bar", "w", "b", "t", "fmi", "df", "ci_lo", "ci_hi"])


def indicator_props(cs: CompletedSet, alert_threshold: float = ALERT_THRESHOLD) -> pd.DataFrame:
    """Positive-indicator rates of observed vs imputed cells for semicontinuous variables.

    ``alert`` is set when the imputed rate differs from the observed rate by
    more than ``alert_threshold``. A difference is not necessarily an error:
    under missingness related to the amount the rates should differ.
    """
    ds = cs.dataset
    rows = []
    for j, v in enumerate(ds.variables):
        if v.kind != "semicontinuous":
            continue
        obs = ds.state[:, j] == CellState.OBSERVED
        n_missing = int((ds.state[:, j] == CellState.MISSING).sum())
        p_obs = float(np.mean(ds.values[obs, j] != 0)) if obs.any() else np.nan
        p_imp = np.nan
        if n_missing:
            rates = []
            for k in range(cs.m):
                imp = cs.states[k][:, j] == CellState.IMPUTED
                if imp.any():
                    rates.append(np.mean(cs.values[k][imp, j] != 0))
            p_imp = float(np.mean(rates)) if rates else np.nan
        fmi_amount = fmi_ind = np.nan
        if cs.m >= 2 and n_missing:
            amt = [mean_estimate(analysis_column(cs, k, v.name)) for k in range(cs.m)]
            fmi_amount = pool_scalar([q for q, _ in amt], [u for _, u in amt]).fmi
            ind = [mean_estimate(analysis_column(cs, k, v.name) != 0) for k in range(cs.m)]
            fmi_ind = pool_scalar([q for q, _ in ind], [u for _, u in ind]).fmi
        alert = bool(np.isfinite(p_imp) and abs(p_imp - p_obs) > alert_threshold)
        rows.append({"variable": v.name, "fmi_amount": fmi_amount, "fmi_indicator": fmi_ind,
                     "prop_positive_obs": p_obs, "prop_positive_imp": p_imp,
                     "n_missing_indicators": n_missing, "alert": alert})
    return pd.DataFrame(rows, columns=["variable", "fmi_amount", "fmi_indicator", "prop_positive_obs",
                                       "prop_positive_imp", "n_missing_indicators", "alert"])


def correlation_matrix(tables) -> np.ndarray:
    """Pearson correlation of the columns of each (n, k) table, averaged over tables."""
    tables = tables if isinstance(tables, (list, tuple)) else [tables]
    mats = []
    for t in tables:
        t = np.asarray(t, float)
        with np.errstate(invalid="ignore", divide="ignore"):
            mats.append(np.corrcoef(t, rowvar=False))
    return np.mean(mats, axis=0)


def correlation_compare(tables_a, tables_b, names) -> tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    """Lower-triangular correlations per method and the paired scatter data.

    Returns ``(corr_a, corr_b, scatter)``; scatter has one row per pair with
    ``x`` the method-b correlation and ``y`` the method-a correlation.
    """
    names = list(names)
    ra, rb = correlation_matrix(tables_a), correlation_matrix(tables_b)
    if ra.shape != rb.shape or ra.shape[0] != len(names):
        raise ValueError("both methods must cover the same variables")

    def tri(r):
        return pd.DataFrame([{"var_i": names[i], "var_j": names[j], "r": r[i, j]}
                             for i in range(len(names)) for j in range(i)], columns=["var_i", "var_j", "r"])

    ca, cb = tri(ra), tri(rb)
    scatter = pd.DataFrame({"var_i": ca["var_i"], "var_j": ca["var_j"], "x": cb["r"], "y": ca["r"]})
    return ca, cb, scatter


@dataclass
class BlandAltman:
    means: np.ndarray
    diffs: np.ndarray
    mean_diff: float
    sd_diff: float

    @property
    def lower(self) -> float:
        return self.mean_diff - 2 * self.sd_diff

    @property
    def upper(self) -> float:
        return self.mean_diff + 2 * self.sd_diff

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"mean": self.means, "diff": self.diffs, "mean_diff": self.mean_diff,
                             "lower": self.lower, "upper": self.upper})


def bland_altman(a, b) -> BlandAltman:
    """Agreement of paired measurements; limits are mean_diff -/+ 2 sd (ddof=1)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError("bland_altman needs equal-length inputs")
    if a.size < 2:
        raise ValueError("bland_altman needs at least 2 pairs")
    d = a - b
    return BlandAltman((a + b) / 2, d, float(d.mean()), float(d.std(ddof=1)))


def regression_compare(obs_fit, mi_fits, hd_fit, names) -> pd.DataFrame:
    """Coefficients and 95% intervals from observed-only, MI-pooled and hot-deck fits.

    Each fit is ``(coefficients, standard_errors)``. Ratio columns compare
    the MI total and mean within variances with the hot-deck variance.
    """
    names = list(names)
    p = len(names)
    for c, s in [obs_fit, hd_fit, *mi_fits]:
        if np.size(c) != p or np.size(s) != p:
            raise ValueError("all fits must share the same model terms")
    obs = pool_regression([obs_fit], names, allow_single=True).estimates
    hd = pool_regression([hd_fit], names, allow_single=True).estimates
    mi = pool_regression(mi_fits, names, allow_single=len(mi_fits) == 1).estimates
    rows = []
    for i, name in enumerate(names):
        row = {"term": name}
        for tag, e in (("obs", obs[i]), ("mi", mi[i]), ("hd", hd[i])):
            lo, hi = e.interval()
            row |= {tag: e.q_bar, f"{tag}_lo": lo, f"{tag}_hi": hi}
        row["overall_var_ratio"] = mi[i].t / hd[i].t if hd[i].t > 0 else np.nan
        row["within_var_ratio"] = mi[i].w / hd[i].t if hd[i].t > 0 else np.nan
        rows.append(row)
    return pd.DataFrame(rows)


def fit_models(cs_mi: CompletedSet, cs_hd: CompletedSet, response: str, predictors, transformed: bool = True):
    """OLS of ``response`` on ``predictors`` for observed cases, each MI table and the hot deck."""
    ds = cs_mi.dataset
    cols = [response, *predictors]

    def design(cs, k):
        data = np.column_stack([analysis_column(cs, k, c, transformed) for c in cols])
        return data[:, 1:], data[:, 0]

    idx = [ds.col(c) for c in cols]
    complete = np.all(ds.state[:, idx] != CellState.MISSING, axis=1)
    obs_x, obs_y = design(cs_mi, 0)
    obs_fit = ols(obs_x[complete], obs_y[complete])
    mi_fits = [ols(*design(cs_mi, k)) for k in range(cs_mi.m)]
    hd_fit = ols(*design(cs_hd, 0))
    return obs_fit, mi_fits, hd_fit


def _default_model(cs: CompletedSet) -> tuple[str, list[str]] | None:
    cand = [v.name for v in cs.dataset.variables
            if v.kind in ("continuous", "semicontinuous", "count") and v.eligibility != "excluded"]
    if len(cand) < 2:
        return None
    return cand[0], cand[1:6]


def write_report(out_dir, cs_mi: CompletedSet, cs_hd: CompletedSet, variables=None, response: str | None = None,
                 predictors=None, ba_variable: str | None = None, alert_threshold: float = ALERT_THRESHOLD,
                 transformed: bool = True) -> list[Path]:
    """Write the full comparison report of an MI run against a hot-deck run."""
    if cs_mi.dataset.names != cs_hd.dataset.names or cs_mi.dataset.n_rows != cs_hd.dataset.n_rows:
        raise ValueError("both completed sets must come from the same dataset")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(variables or numeric_variables(cs_mi))
    written = []

    def emit(frame: pd.DataFrame, fname: str):
        path = out / fname
        frame.to_csv(path, index=False, na_rep="")
        written.append(path)

    parts = []
    for name in names:
        obs = observed_column(cs_mi, name, transformed)
        for tag, cs in (("mi", cs_mi), ("hd", cs_hd)):
            com = [_applicable_values(cs, k, name) for k in range(cs.m)]
            if transformed and cs.dataset.spec(name).transform != "none":
                com = [forward(cs.dataset.spec(name).transform, c) for c in com]
            s = summary_compare(obs, com)
            s.insert(0, "method", tag)
            s.insert(0, "variable", name)
            parts.append(s)
    emit(pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(), "summary.csv")
    emit(fmi_table(cs_mi, names), "fmi.csv")
    emit(indicator_props(cs_mi, alert_threshold), "indicator_props.csv")

    ta = [np.column_stack([analysis_column(cs_mi, k, n, transformed) for n in names]) for k in range(cs_mi.m)]
    tb = [np.column_stack([analysis_column(cs_hd, 0, n, transformed) for n in names])]
    ca, cb, scatter = correlation_compare(ta, tb, names)
    emit(ca, "corr_method_a.csv")
    emit(cb, "corr_method_b.csv")
    emit(scatter, "corr_scatter.csv")

    ba_variable = ba_variable or (names[0] if names else None)
    if ba_variable is not None:
        a = np.mean([analysis_column(cs_mi, k, ba_variable, transformed) for k in range(cs_mi.m)], axis=0)
        b = analysis_column(cs_hd, 0, ba_variable, transformed)
        ba = bland_altman(a, b)
        frame = ba.frame()
        frame.insert(0, "row", np.arange(len(a)))
        emit(frame, "bland_altman.csv")

    model = (response, list(predictors)) if response and predictors else _default_model(cs_mi)
    if model is not None:
        obs_fit, mi_fits, hd_fit = fit_models(cs_mi, cs_hd, model[0], model[1], transformed)
        emit(regression_compare(obs_fit, mi_fits, hd_fit, ["intercept", *model[1]]), "regression_compare.csv")

    manifest = {
        "version": __version__,
        "variables": names,
        "transformed_scale": transformed,
        "correlation_averaging": "plain mean of per-imputation Pearson r",
        "bland_altman_variable": ba_variable,
        "regression": {"response": model[0], "predictors": model[1]} if model else None,
        "alert_threshold": alert_threshold,
        "m": cs_mi.m,
        "warnings": cs_mi.warnings + cs_hd.warnings,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    written.append(path)
    return written
