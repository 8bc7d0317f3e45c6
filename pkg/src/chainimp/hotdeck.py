"""Univariate random hot-deck imputation, the single-imputation baseline."""

from __future__ import annotations

import warnings

import numpy as np

from .data_model import CellState, Dataset, restriction_order
from .engine import (
    ChainState,
    CompletedSet,
    EngineConfig,
    ImputationError,
    _enforce_dependents,
    build_plan,
    donor_draw,
    order_variables,
)


def hotdeck_impute(ds: Dataset, seed: int = 0) -> CompletedSet:
    """Fill each missing cell with a uniform draw from observed values of its variable.

    Donors are restricted to the cell's bracket when it has one. No covariate
    is consulted and every variable is handled on its own. Filters are filled
    before the variables they restrict so applicability follows the imputed
    filter values; a filter draw that would switch off an observed dependent
    value is redrawn. Returns a single-table :class:`CompletedSet`.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    plan = build_plan(ds)
    st = ChainState(ds.values.copy(), ds.state.copy(), rng)
    values, state = st.values, st.state
    rules = ds.bound_rules
    log: list[dict] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for j in restriction_order(ds.variables):
            spec = ds.variables[j]
            if spec.eligibility == "excluded":
                continue
            if rules[j] is not None:
                truth, known = rules[j].evaluate(values, state)
                cand = ds.state[:, j] != CellState.OBSERVED
                off = cand & known & ~truth
                values[off, j] = np.nan
                state[off, j] = CellState.NOT_APPLICABLE
                state[cand & truth & (state[:, j] == CellState.NOT_APPLICABLE), j] = CellState.MISSING
            rows = np.nonzero(state[:, j] == CellState.MISSING)[0]
            if rows.size == 0:
                continue
            donors = ds.values[ds.state[:, j] == CellState.OBSERVED, j]
            if donors.size == 0:
                raise ImputationError(spec.name, "empty donor pool")

            def sample(r, donors=donors, j=j, name=spec.name):
                return donor_draw(donors, rng, ds.lower[r, j], ds.upper[r, j], name)

            values[rows, j] = _enforce_dependents(ds, plan, st, j, rows, sample(rows), sample)
            state[rows, j] = CellState.IMPUTED
    for w in caught:
        log.append({"chain": 0, "cycle": 0, "variable": "hotdeck", "message": str(w.message)})
    cfg = EngineConfig(m=1, seed=int(seed))
    return CompletedSet(ds, [values], [state], [{}], log, cfg, order_variables(ds))
