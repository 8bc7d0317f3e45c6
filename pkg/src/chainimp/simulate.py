"""Synthetic survey generators with known truth for testing and benchmarking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data_model import NA_TOKEN

BRACKET_CUTS = (0.0, 1e3, 5e3, 1e4, 2.5e4, 5e4, 1e5, 2.5e5, 5e5, 1e6, np.inf)


@dataclass
class Simulated:
    """Raw CSV-ready cells, the matching config, and the complete truth."""

    frame: pd.DataFrame
    config: dict
    truth: pd.DataFrame

    def write(self, data_path, config_path) -> None:
        import json

        self.frame.to_csv(data_path, index=False)
        with open(config_path, "w", encoding="utf-8") as fh:
            json.dump(self.config, fh, indent=2)


def _cells(x: np.ndarray, missing: np.ndarray, na: np.ndarray | None = None) -> np.ndarray:
    out = np.array([repr(float(v)) for v in x], dtype=object)
    out[missing] = ""
    if na is not None:
        out[na] = NA_TOKEN
    return out


def _labels(codes: np.ndarray, levels, missing: np.ndarray, na: np.ndarray | None = None) -> np.ndarray:
    out = np.array(levels, dtype=object)[codes]
    out[missing] = ""
    if na is not None:
        out[na] = NA_TOKEN
    return out


def bivariate(n: int, rho: float, miss_frac: float, rng: np.random.Generator,
              mechanism: str = "mcar") -> Simulated:
    """Standard bivariate normal (x, y) with corr ``rho`` and missing y.

    ``mechanism="mar"`` makes y missing with a probability increasing in x
    (logistic in x, calibrated to ``miss_frac`` on average), which biases
    the complete-case mean of y upwards or downwards depending on sign(rho).
    """
    x = rng.standard_normal(n)
    y = rho * x + np.sqrt(1 - rho**2) * rng.standard_normal(n)
    if mechanism == "mcar":
        miss = rng.random(n) < miss_frac
    elif mechanism == "mar":
        lo, hi = -20.0, 20.0
        # solve for the intercept giving the requested average rate
        for _ in range(60):
            mid = (lo + hi) / 2
            rate = np.mean(1 / (1 + np.exp(-(mid + 1.5 * x))))
            lo, hi = (mid, hi) if rate < miss_frac else (lo, mid)
        miss = rng.random(n) < 1 / (1 + np.exp(-(lo + 1.5 * x)))
    else:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    frame = pd.DataFrame({"x": _cells(x, np.zeros(n, bool)), "y": _cells(y, miss)})
    config = {"variables": [{"name": "x"}, {"name": "y"}]}
    return Simulated(frame, config, pd.DataFrame({"x": x, "y": y}))


def regression_fixture(n: int, miss_frac: float, rng: np.random.Generator,
                       beta=(1.0, 2.0, -1.0)) -> Simulated:
    """y = b0 + b1*x1 + b2*x2 + e with MCAR holes in y, x1 and x2."""
    x1 = rng.standard_normal(n)
    x2 = 0.5 * x1 + rng.standard_normal(n)
    y = beta[0] + beta[1] * x1 + beta[2] * x2 + rng.standard_normal(n)
    cols = {}
    for name, v in (("y", y), ("x1", x1), ("x2", x2)):
        cols[name] = _cells(v, rng.random(n) < miss_frac)
    config = {"variables": [{"name": "y"}, {"name": "x1"}, {"name": "x2"}]}
    return Simulated(pd.DataFrame(cols), config, pd.DataFrame({"y": y, "x1": x1, "x2": x2}))


def _bracket(value: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cuts = np.array(BRACKET_CUTS)
    k = np.clip(np.searchsorted(cuts, value, side="right") - 1, 0, len(cuts) - 2)
    zero = value == 0
    # a reported zero pins the bracket to zero
    return np.where(zero, 0.0, cuts[k]), np.where(zero, 0.0, cuts[k + 1])


def _bounds_cells(lo: np.ndarray, hi: np.ndarray, use: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo_c = np.array(["" if not u else repr(float(v)) for u, v in zip(use, lo)], dtype=object)
    hi_c = np.array(["" if not u or not np.isfinite(v) else repr(float(v)) for u, v in zip(use, hi)], dtype=object)
    return lo_c, hi_c


def survey(n: int, rng: np.random.Generator, n_variables: int | None = None, miss_rate: float = 0.1,
           bracket_share: float = 0.5) -> Simulated:
    """Household-wealth-like survey with nested skip patterns and brackets.

    Core variables: ``age`` and ``educ`` (near complete), ``income``,
    ``own_home`` -> ``house_value`` and ``has_second`` -> ``second_value``,
    and the semicontinuous assets ``stocks`` and ``savings``. A latent
    wealth factor correlates everything. Missing amounts carry a bracket
    containing the true value with probability ``bracket_share``.
    ``n_variables`` pads the table with correlated filler variables.
    """
    z = rng.standard_normal(n)
    age = np.round(np.clip(45 + 12 * rng.standard_normal(n) + 3 * z, 18, 95))
    educ = np.clip(np.round(1 + 0.6 * z + 0.8 * rng.standard_normal(n)), 0, 2).astype(int)
    income = np.round(np.exp(10.5 + 0.5 * z + 0.2 * educ + 0.3 * rng.standard_normal(n)), 0)
    own = (0.8 * z + 0.02 * (age - 45) + rng.standard_normal(n) > -0.3).astype(int)
    house = np.round(np.exp(11.8 + 0.6 * z + 0.4 * rng.standard_normal(n)), -2)
    second = (own == 1) & (0.8 * z + rng.standard_normal(n) > 1.2)
    second_val = np.round(np.exp(11.0 + 0.5 * z + 0.5 * rng.standard_normal(n)), -2)
    stocks = np.where(0.9 * z + rng.standard_normal(n) > 0.4,
                      np.round(np.exp(9.5 + 0.9 * z + rng.standard_normal(n)), 0), 0.0)
    savings = np.where(0.5 * z + rng.standard_normal(n) > -1.0,
                       np.round(np.exp(8.5 + 0.6 * z + 0.8 * rng.standard_normal(n)), 0), 0.0)

    def holes(rate):
        return rng.random(n) < rate

    na_house = own == 0
    na_second_flag = own == 0
    na_second_val = ~second
    cols: dict[str, np.ndarray] = {}
    truth: dict[str, np.ndarray] = {}
    variables: list[dict] = []

    def add_amount(name, v, na, rate, kind="continuous"):
        miss = holes(rate) & ~na
        lo, hi = _bracket(v)
        use = miss & (rng.random(n) < bracket_share)
        cols[name] = _cells(v, miss, na)
        cols[f"{name}_lo"], cols[f"{name}_hi"] = _bounds_cells(lo, hi, use)
        truth[name] = np.where(na, np.nan, v)
        return {"name": name, "kind": kind, "transform": "cube-root",
                "bounds_low": f"{name}_lo", "bounds_high": f"{name}_hi"}

    cols["age"] = _cells(age, holes(0.005))
    truth["age"] = age
    variables.append({"name": "age"})
    cols["educ"] = _labels(educ, ["low", "mid", "high"], holes(0.02))
    truth["educ"] = educ
    variables.append({"name": "educ", "kind": "categorical", "levels": ["low", "mid", "high"]})
    variables.append(add_amount("income", income, np.zeros(n, bool), miss_rate))
    cols["own_home"] = _labels(own, ["no", "yes"], holes(miss_rate / 3))
    truth["own_home"] = own
    variables.append({"name": "own_home", "kind": "categorical", "levels": ["no", "yes"]})
    spec = add_amount("house_value", house, na_house, miss_rate)
    spec["restriction"] = "own_home == 'yes'"
    variables.append(spec)
    cols["has_second"] = _labels(second.astype(int), ["no", "yes"], holes(miss_rate / 3) & ~na_second_flag,
                                 na_second_flag)
    truth["has_second"] = np.where(na_second_flag, np.nan, second.astype(int))
    variables.append({"name": "has_second", "kind": "categorical", "levels": ["no", "yes"],
                      "restriction": "own_home == 'yes'"})
    spec = add_amount("second_value", second_val, na_second_val, miss_rate)
    spec["restriction"] = "has_second == 'yes'"
    variables.append(spec)
    for name, v in (("stocks", stocks), ("savings", savings)):
        variables.append(add_amount(name, v, np.zeros(n, bool), miss_rate, kind="semicontinuous"))

    n_core = len(variables)
    for k in range(max(0, (n_variables or 0) - n_core)):
        load = rng.uniform(-0.8, 0.8)
        v = load * z + np.sqrt(1 - load**2) * rng.standard_normal(n)
        name = f"f{k + 1:03d}"
        cols[name] = _cells(v, holes(miss_rate))
        truth[name] = v
        variables.append({"name": name})

    ordered = {}
    for spec in variables:
        ordered[spec["name"]] = cols[spec["name"]]
    for spec in variables:
        if "bounds_low" in spec:
            ordered[spec["bounds_low"]] = cols[spec["bounds_low"]]
            ordered[spec["bounds_high"]] = cols[spec["bounds_high"]]
    return Simulated(pd.DataFrame(ordered), {"variables": variables}, pd.DataFrame(truth))
