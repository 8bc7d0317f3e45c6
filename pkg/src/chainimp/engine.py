"""Chained-equation (sequential regression) multiple imputation driver."""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import __version__
from .data_model import (
    CellState,
    Dataset,
    required_applicable,
    restriction_ancestors,
    restriction_order,
)
from .regressors import (
    ConvergenceError,
    RankDeficientError,
    draw_glm_predictive,
    draw_linear_predictive,
    fit_glm,
    fit_linear,
)
from .selection import COLLINEAR_TOL, Pool, SelectionConfig, forward_select, screen_collinear, variable_columns
from .transforms import forward, forward_bounds, inverse

logger = logging.getLogger(__name__)

CHAIN_MODES = ("independent-chains", "single-chain-thinned")
MIN_ROWS_MARGIN = 5
CONSTRAINT_REDRAWS = 20


class ImputationError(RuntimeError):
    def __init__(self, variable: str, message: str):
        super().__init__(f"{variable}: {message}")
        self.variable = variable


@dataclass
class EngineConfig:
    m: int = 10
    burn_in_cycles: int = 10
    between_cycles: int = 5
    chain_mode: str = "independent-chains"
    seed: int = 0
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    threads: int = 1
    collinear_tol: float = COLLINEAR_TOL

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.burn_in_cycles < 1:
            raise ValueError("burn_in_cycles must be at least 1")
        if self.between_cycles < 1:
            raise ValueError("between_cycles must be at least 1")
        if self.chain_mode not in CHAIN_MODES:
            raise ValueError(f"chain_mode must be one of {CHAIN_MODES}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class ChainState:
    values: np.ndarray
    state: np.ndarray
    rng: np.random.Generator
    chain: int = 0
    cycle: int = 0
    selected: dict[str, dict[str, list[str]]] = field(default_factory=dict)
    warnings: list[dict] = field(default_factory=list)
    blocks: dict[int, tuple[np.ndarray, list[str]]] = field(default_factory=dict, repr=False)

    @property
    def imputed_mask(self) -> np.ndarray:
        return self.state == CellState.IMPUTED

    def block(self, ds: Dataset, j: int) -> tuple[np.ndarray, list[str]]:
        if j not in self.blocks:
            self.blocks[j] = variable_columns(ds.variables[j], self.values[:, j], self.state[:, j])
        return self.blocks[j]


@dataclass
class Plan:
    order: list[int]
    topo: list[int]
    predictors: dict[int, list[int]]
    dependents: list[list[int]]
    descendants: list[list[int]]
    required: np.ndarray


# ---------------------------------------------------------------------------
# Ordering and planning
# ---------------------------------------------------------------------------


def order_variables(ds: Dataset) -> list[str]:
    """Imputation order: incomplete imputed variables, least missing first.

    Ties keep declaration order. A restricted variable is moved after the
    variables that restrict it so that its applicable set is settled before
    it is imputed in each cycle.
    """
    counts = (ds.state == CellState.MISSING).sum(axis=0)
    cand = [j for j, v in enumerate(ds.variables) if v.imputed and counts[j] > 0]
    cand.sort(key=lambda j: (counts[j], j))
    ancestors = restriction_ancestors(ds.variables)
    pending = list(cand)
    placed: list[int] = []
    in_order = set(cand)
    while pending:
        for pos, j in enumerate(pending):
            if all(a in placed or a not in in_order for a in ancestors[j]):
                placed.append(pending.pop(pos))
                break
    return [ds.variables[j].name for j in placed]


def build_plan(ds: Dataset) -> Plan:
    variables = ds.variables
    order = [ds.col(n) for n in order_variables(ds)]
    topo = restriction_order(variables)
    ancestors = restriction_ancestors(variables)
    p = len(variables)
    dependents: list[list[int]] = [[] for _ in range(p)]
    for j, v in enumerate(variables):
        if v.restriction is not None:
            for dep in v.restriction.depends_on:
                dependents[ds.col(dep)].append(j)
    descendants = []
    for j in range(p):
        desc = {k for k in range(p) if j in ancestors[k] and variables[k].eligibility != "excluded"}
        descendants.append([k for k in topo if k in desc])
    predictors = {}
    for j in order:
        banned = ancestors[j] | set(descendants[j]) | {j}
        predictors[j] = [k for k, v in enumerate(variables) if v.predictor and k not in banned]
    return Plan(order, topo, predictors, dependents, descendants, required_applicable(ds))


# ---------------------------------------------------------------------------
# Donor (marginal) draws
# ---------------------------------------------------------------------------


def donor_draw(donors: np.ndarray, rng: np.random.Generator, lower: np.ndarray, upper: np.ndarray,
               warn_label: str = "") -> np.ndarray:
    """Uniform draws from ``donors``, each restricted to its own [lower, upper].

    Picking uniformly among in-bracket donors is the same distribution as
    rejection sampling. When a bracket holds no donor, a global donor is
    drawn and clipped into the bracket, with a warning.
    """
    k = len(lower)
    donors = np.sort(np.asarray(donors, float))
    if donors.size == 0:
        raise ValueError("empty donor pool")
    lo_idx = np.searchsorted(donors, lower, side="left")
    hi_idx = np.searchsorted(donors, upper, side="right")
    span = hi_idx - lo_idx
    u = rng.random(k)
    out = np.empty(k)
    ok = span > 0
    out[ok] = donors[lo_idx[ok] + np.minimum((u[ok] * span[ok]).astype(int), span[ok] - 1)]
    if (~ok).any():
        g = donors[rng.integers(0, donors.size, int((~ok).sum()))]
        out[~ok] = np.clip(g, lower[~ok], upper[~ok])
        warnings.warn(f"{warn_label}: {int((~ok).sum())} bracket(s) without donors; "
                      f"used the global pool clipped to the bracket", stacklevel=2)
    return out


def _marginal_sampler(ds: Dataset, st: ChainState, j: int) -> Callable[[np.ndarray], np.ndarray]:
    name = ds.variables[j].name
    obs = ds.state[:, j] == CellState.OBSERVED
    rule = ds.bound_rules[j]
    donors_mask = obs
    if rule is not None:
        truth, _ = rule.evaluate(st.values, st.state)
        if (obs & truth).any():
            donors_mask = obs & truth
    donors = ds.values[donors_mask, j]
    if donors.size == 0:
        raise ImputationError(name, "uninitializable variable (no observed donors)")

    def sample(rows):
        return donor_draw(donors, st.rng, ds.lower[rows, j], ds.upper[rows, j], name)

    return sample


# ---------------------------------------------------------------------------
# Restriction bookkeeping
# ---------------------------------------------------------------------------


def _enforce_dependents(ds: Dataset, plan: Plan, st: ChainState, j: int, rows: np.ndarray,
                        draws: np.ndarray, sampler) -> np.ndarray:
    """Redraw filter values that would switch off a required dependent."""
    deps = [w for w in plan.dependents[j] if plan.required[rows, w].any()]
    if not deps:
        return draws
    rules = ds.bound_rules

    def violations(cand_rows, cand_vals):
        sub = st.values[cand_rows].copy()
        sub_state = st.state[cand_rows].copy()
        sub[:, j] = cand_vals
        sub_state[:, j] = CellState.IMPUTED
        bad = np.zeros(len(cand_rows), dtype=bool)
        for w in deps:
            truth, _ = rules[w].evaluate(sub, sub_state)
            bad |= plan.required[cand_rows, w] & ~truth
        return bad

    bad = violations(rows, draws)
    for _ in range(CONSTRAINT_REDRAWS):
        if not bad.any():
            return draws
        idx = np.nonzero(bad)[0]
        draws[idx] = sampler(rows[idx])
        bad[idx] = violations(rows[idx], draws[idx])
    if not bad.any():
        return draws
    spec = ds.variables[j]
    obs = ds.state[:, j] == CellState.OBSERVED
    candidates = np.arange(len(spec.levels), dtype=float) if spec.kind == "categorical" else np.unique(ds.values[obs, j])
    candidates = st.rng.permutation(candidates)
    unresolved = 0
    for i in np.nonzero(bad)[0]:
        r = rows[i]
        ok = (candidates >= ds.lower[r, j]) & (candidates <= ds.upper[r, j])
        cands = candidates[ok]
        if cands.size == 0:
            unresolved += 1
            continue
        bad_c = violations(np.full(cands.size, r), cands)
        if (~bad_c).any():
            draws[i] = cands[np.argmax(~bad_c)]
        else:
            unresolved += 1
    warnings.warn(f"{spec.name}: {int(bad.sum())} draw(s) conflicted with observed dependent values; "
                  f"{unresolved} could not be resolved", stacklevel=2)
    return draws


def _sync_downstream(ds: Dataset, plan: Plan, st: ChainState, j: int) -> None:
    rules = ds.bound_rules
    for w in plan.descendants[j]:
        truth, _ = rules[w].evaluate(st.values, st.state)
        imputable = ds.state[:, w] != CellState.OBSERVED
        cur = st.state[:, w]
        to_na = imputable & ~truth & (cur != CellState.NOT_APPLICABLE)
        to_app = imputable & truth & (cur == CellState.NOT_APPLICABLE)
        if to_na.any():
            st.values[to_na, w] = np.nan
            cur[to_na] = CellState.NOT_APPLICABLE
        if to_app.any():
            rows = np.nonzero(to_app)[0]
            cur[rows] = CellState.IMPUTED
            sampler = _marginal_sampler(ds, st, w)
            st.values[rows, w] = _enforce_dependents(ds, plan, st, w, rows, sampler(rows), sampler)
        violated = (ds.state[:, w] == CellState.OBSERVED) & ~truth
        if violated.any():
            warnings.warn(f"{ds.variables[w].name}: restriction false on {int(violated.sum())} observed cell(s)",
                          stacklevel=2)
        if to_na.any() or to_app.any():
            st.blocks.pop(w, None)


# ---------------------------------------------------------------------------
# Chain initialization
# ---------------------------------------------------------------------------


def initialize_chain(ds: Dataset, rng: np.random.Generator, plan: Plan | None = None, chain: int = 0) -> ChainState:
    """Fill every missing cell with a donor draw from the variable's observed values.

    Variables are visited filters-first so each restricted variable is only
    filled on rows where its restriction holds.
    """
    plan = plan or build_plan(ds)
    st = ChainState(ds.values.copy(), ds.state.copy(), rng, chain=chain)
    rules = ds.bound_rules
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for j in plan.topo:
            spec = ds.variables[j]
            if spec.eligibility == "excluded":
                continue
            if rules[j] is not None:
                truth, known = rules[j].evaluate(st.values, st.state)
                off = (st.state[:, j] == CellState.MISSING) & known & ~truth
                st.state[off, j] = CellState.NOT_APPLICABLE
            rows = np.nonzero(st.state[:, j] == CellState.MISSING)[0]
            if rows.size == 0:
                continue
            sampler = _marginal_sampler(ds, st, j)
            st.values[rows, j] = _enforce_dependents(ds, plan, st, j, rows, sampler(rows), sampler)
            st.state[rows, j] = CellState.IMPUTED
    _record(st, caught, "init")
    return st


def _record(st: ChainState, caught, variable: str) -> None:
    for w in caught:
        st.warnings.append({"chain": st.chain, "cycle": st.cycle, "variable": variable,
                            "message": str(w.message)})


# ---------------------------------------------------------------------------
# Per-variable update
# ---------------------------------------------------------------------------


def _pool(ds: Dataset, plan: Plan, st: ChainState, j: int) -> Pool:
    blocks, labels = [], []
    for k in plan.predictors.get(j, []):
        m, lab = st.block(ds, k)
        blocks.append(m)
        labels += lab
    matrix = np.hstack(blocks) if blocks else np.empty((ds.n_rows, 0))
    return Pool(matrix, labels)


def _select(y, pool_fit: np.ndarray, cfg: EngineConfig) -> list[int]:
    retained, _ = screen_collinear(pool_fit, cfg.collinear_tol)
    if not retained:
        return []
    res = forward_select(y, pool_fit[:, retained], cfg.selection, cfg.collinear_tol)
    return [retained[i] for i in res.selected]


def _design(pool: np.ndarray, cols: list[int], rows) -> np.ndarray:
    sub = pool[np.ix_(rows, cols)] if cols else np.empty((len(rows), 0))
    return np.column_stack([np.ones(len(rows)), sub])


def _linear_stage(y, fit_rows, pool: Pool, cfg: EngineConfig, tag: str, st: ChainState, name: str):
    """Select and fit a normal linear model; returns (fit, columns) or None."""
    n = len(fit_rows)
    if n < 2:
        return None
    cols = _select(y, pool.matrix[fit_rows], cfg)
    if n < len(cols) + 1 + MIN_ROWS_MARGIN:
        cols = []
    try:
        fit = fit_linear(_design(pool.matrix, cols, fit_rows), y)
    except RankDeficientError:
        warnings.warn(f"{name}/{tag}: rank-deficient design after screening; using intercept only", stacklevel=2)
        cols = []
        fit = fit_linear(np.ones((n, 1)), y)
    st.selected.setdefault(name, {})[tag] = [pool.labels[c] for c in cols]
    return fit, cols


def _glm_stage(y, fit_rows, pool: Pool, cfg: EngineConfig, family: str, n_classes: int, working,
               tag: str, st: ChainState, name: str):
    n = len(fit_rows)
    cols = _select(working, pool.matrix[fit_rows], cfg)
    if n < len(cols) + 1 + MIN_ROWS_MARGIN:
        cols = []
    try:
        fit = fit_glm(_design(pool.matrix, cols, fit_rows), y, family, n_classes=n_classes)
    except (ConvergenceError, np.linalg.LinAlgError):
        if not cols:
            return None
        warnings.warn(f"{name}/{tag}: {family} fit failed; using intercept only", stacklevel=2)
        cols = []
        try:
            fit = fit_glm(np.ones((n, 1)), y, family, n_classes=n_classes)
        except (ConvergenceError, np.linalg.LinAlgError):
            return None
    st.selected.setdefault(name, {})[tag] = [pool.labels[c] for c in cols]
    return fit, cols


def _make_sampler(ds: Dataset, plan: Plan, st: ChainState, j: int, cfg: EngineConfig):
    spec = ds.variables[j]
    name = spec.name
    obs_rows = np.nonzero(ds.state[:, j] == CellState.OBSERVED)[0]
    y_obs = ds.values[obs_rows, j]
    pool = _pool(ds, plan, st, j)
    rng = st.rng
    lower, upper = ds.lower[:, j], ds.upper[:, j]
    marginal = None

    def fallback(reason):
        nonlocal marginal
        warnings.warn(f"{name}: {reason}; drawing from the observed marginal", stacklevel=3)
        if marginal is None:
            marginal = _marginal_sampler(ds, st, j)
        return marginal

    if obs_rows.size == 0:
        return fallback("no observed applicable cases")

    if spec.kind == "continuous":
        y = forward(spec.transform, y_obs)
        res = _linear_stage(y, obs_rows, pool, cfg, "model", st, name)
        if res is None:
            return fallback("too few observed cases for a linear model")
        fit, cols = res
        t_lo, t_hi = forward_bounds(spec.transform, lower, upper)
        beta_fit = fit

        def sample(rows):
            x = _design(pool.matrix, cols, rows)
            return inverse(spec.transform, draw_linear_predictive(beta_fit, x, rng, t_lo[rows], t_hi[rows]))

        return sample

    if spec.kind == "count":
        if np.all(y_obs == y_obs[0]):
            return lambda rows: np.full(len(rows), y_obs[0])
        res = _glm_stage(y_obs, obs_rows, pool, cfg, "poisson", 2, y_obs, "model", st, name)
        if res is None:
            return fallback("poisson fit failed")
        fit, cols = res
        return lambda rows: draw_glm_predictive(fit, _design(pool.matrix, cols, rows), rng)

    if spec.kind == "categorical":
        present = np.unique(y_obs).astype(int)
        if present.size == 1:
            return lambda rows: np.full(len(rows), float(present[0]))
        cls = np.searchsorted(present, y_obs.astype(int)).astype(float)
        working = (cls[:, None] == np.arange(present.size)[None, :]).astype(float)
        if present.size == 2:
            res = _glm_stage(cls, obs_rows, pool, cfg, "bernoulli", 2, working[:, 1], "model", st, name)
        else:
            res = _glm_stage(cls, obs_rows, pool, cfg, "multinomial", present.size, working, "model", st, name)
        if res is None:
            return fallback("logistic fit failed")
        fit, cols = res
        return lambda rows: present[draw_glm_predictive(fit, _design(pool.matrix, cols, rows), rng).astype(int)] \
            .astype(float)

    # semicontinuous: presence, then amount given presence
    nz = y_obs != 0
    force_one = (lower > 0) | (upper < 0)
    force_zero = (lower == 0) & (upper == 0)
    if nz.all() or not nz.any():
        const = 1.0 if nz.all() else 0.0

        def ind_sample(rows):
            return np.full(len(rows), const)
    else:
        z = nz.astype(float)
        res = _glm_stage(z, obs_rows, pool, cfg, "bernoulli", 2, z, "indicator", st, name)
        if res is None:
            p_nz = z.mean()

            def ind_sample(rows):
                return (rng.random(len(rows)) < p_nz).astype(float)
        else:
            ind_fit, ind_cols = res

            def ind_sample(rows):
                return draw_glm_predictive(ind_fit, _design(pool.matrix, ind_cols, rows), rng)

    amt_rows = obs_rows[nz]
    t_lo, t_hi = forward_bounds(spec.transform, lower, upper)
    amount_sample = None
    if amt_rows.size:
        y_amt = forward(spec.transform, y_obs[nz])
        res = _linear_stage(y_amt, amt_rows, pool, cfg, "amount", st, name)
        if res is not None:
            amt_fit, amt_cols = res

            def amount_sample(rows):
                x = _design(pool.matrix, amt_cols, rows)
                return inverse(spec.transform, draw_linear_predictive(amt_fit, x, rng, t_lo[rows], t_hi[rows]))
        else:
            donors = y_obs[nz]

            def amount_sample(rows):
                return donor_draw(donors, rng, lower[rows], upper[rows], name)

    def sample(rows):
        ind = ind_sample(rows)
        ind[force_one[rows]] = 1.0
        ind[force_zero[rows]] = 0.0
        out = np.zeros(len(rows))
        pos = np.nonzero(ind == 1.0)[0]
        if pos.size:
            if amount_sample is None:
                raise ImputationError(name, "no observed nonzero amounts to impute from")
            out[pos] = amount_sample(rows[pos])
        return out

    return sample


def impute_variable(ds: Dataset, plan: Plan, st: ChainState, j: int, cfg: EngineConfig) -> ChainState:
    """Refit variable ``j`` on its applicable observed rows and redraw its imputed cells."""
    rows = np.nonzero(st.state[:, j] == CellState.IMPUTED)[0]
    if rows.size == 0:
        return st
    name = ds.variables[j].name
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            sampler = _make_sampler(ds, plan, st, j, cfg)
            draws = _enforce_dependents(ds, plan, st, j, rows, sampler(rows), sampler)
        except ImputationError:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the variable named
            raise ImputationError(name, f"{type(exc).__name__}: {exc}") from exc
        st.values[rows, j] = draws
        st.blocks.pop(j, None)
        _sync_downstream(ds, plan, st, j)
    _record(st, caught, name)
    return st


def run_cycle(ds: Dataset, plan: Plan, st: ChainState, cfg: EngineConfig) -> ChainState:
    st.cycle += 1
    for j in plan.order:
        impute_variable(ds, plan, st, j, cfg)
    return st


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass
class CompletedSet:
    dataset: Dataset
    values: list[np.ndarray]
    states: list[np.ndarray]
    selected: list[dict]
    warnings: list[dict]
    config: EngineConfig
    order: list[str]

    @property
    def m(self) -> int:
        return len(self.values)

    def imputed_mask(self, k: int) -> np.ndarray:
        return self.states[k] == CellState.IMPUTED

    def column(self, k: int, name: str, na_as_zero: bool = True) -> np.ndarray:
        j = self.dataset.col(name)
        x = self.values[k][:, j].copy()
        if na_as_zero:
            x[self.states[k][:, j] == CellState.NOT_APPLICABLE] = 0.0
        return x

    def table(self, k: int) -> pd.DataFrame:
        return self.dataset.to_frame(self.values[k], self.states[k], include_aux=False)

    def provenance(self) -> pd.DataFrame:
        ds = self.dataset
        cand = ds.state != CellState.OBSERVED
        cand &= np.array([v.eligibility != "excluded" for v in ds.variables])[None, :]
        rows, cols = np.nonzero(cand)
        names = np.array(ds.names, dtype=object)
        frames = [
            pd.DataFrame({
                "row": rows,
                "variable": names[cols],
                "chain": k,
                "imputed_flag": (self.states[k][rows, cols] == CellState.IMPUTED).astype(int),
            })
            for k in range(self.m)
        ]
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
            columns=["row", "variable", "chain", "imputed_flag"])

    def manifest(self) -> dict:
        config = asdict(self.config)
        # parallelism never changes the output, so it stays out of the record
        config.pop("threads")
        return {
            "version": __version__,
            "config": config,
            "seed": self.config.seed,
            "order": self.order,
            "selected_predictors": {str(k): sel for k, sel in enumerate(self.selected)},
            "warnings": self.warnings,
            "n_rows": self.dataset.n_rows,
            "variables": self.dataset.names,
        }

    def write(self, out_dir, manifest_extra: dict | None = None) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        width = len(str(self.m))
        for k in range(self.m):
            path = out / f"completed_{k + 1:0{width}d}.csv"
            self.table(k).to_csv(path, index=False)
            written.append(path)
        path = out / "provenance.csv"
        self.provenance().to_csv(path, index=False)
        written.append(path)
        manifest = self.manifest()
        if manifest_extra:
            manifest.update(manifest_extra)
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
        written.append(path)
        return written


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Independent stream per chain derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chain),)))


def _run_chain(args):
    ds, plan, cfg, chain, emit_at = args
    st = initialize_chain(ds, chain_rng(cfg.seed, chain), plan, chain=chain)
    tables = []
    total = max(emit_at)
    for c in range(1, total + 1):
        run_cycle(ds, plan, st, cfg)
        if c in emit_at:
            tables.append((st.values.copy(), st.state.copy(), {k: dict(v) for k, v in st.selected.items()}))
        logger.debug("chain %d cycle %d done", chain, c)
    return tables, st.warnings


def run(ds: Dataset, cfg: EngineConfig | None = None) -> CompletedSet:
    """Produce ``cfg.m`` completed datasets.

    Independent-chains mode runs one chain per imputation and keeps each
    chain's state after the burn-in. Single-chain mode keeps one state after
    the burn-in and then one every ``between_cycles`` cycles. Output does not
    depend on ``cfg.threads``.
    """
    cfg = cfg or EngineConfig()
    plan = build_plan(ds)
    if cfg.chain_mode == "independent-chains":
        jobs = [(ds, plan, cfg, c, {cfg.burn_in_cycles}) for c in range(cfg.m)]
    else:
        emit = {cfg.burn_in_cycles + k * cfg.between_cycles for k in range(cfg.m)}
        jobs = [(ds, plan, cfg, 0, emit)]
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_run_chain, jobs))
    else:
        results = [_run_chain(job) for job in jobs]
    values, states, selected, warns = [], [], [], []
    for tables, chain_warnings in results:
        for v, s, sel in tables:
            values.append(v)
            states.append(s)
            selected.append(sel)
        warns.extend(chain_warnings)
    return CompletedSet(ds, values, states, selected, warns, cfg, [ds.variables[j].name for j in plan.order])


def read_completed(ds: Dataset, paths) -> CompletedSet:
    """Rebuild a CompletedSet from completed tables written by :meth:`CompletedSet.write`.

    Cells observed in ``ds`` must match the table exactly; every other
    non-NA cell is marked imputed.
    """
    from .data_model import dataset_from_frame

    entries = []
    for v in ds.variables:
        entry = v.to_config()
        for key in ("bounds_low", "bounds_high", "missing_sentinels", "imputed_flag"):
            entry.pop(key, None)
        entries.append(entry)
    config = {"variables": entries}
    if ds.weight_column:
        config["weight"] = ds.weight_column
    values, states = [], []
    for path in paths:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
        table = dataset_from_frame(frame, config)
        if table.n_rows != ds.n_rows:
            raise ValueError(f"{path}: row count differs from the source data")
        if (table.state == CellState.MISSING).any():
            raise ValueError(f"{path}: table still has missing cells")
        obs = ds.state == CellState.OBSERVED
        if not np.array_equal(table.values[obs], ds.values[obs]):
            raise ValueError(f"{path}: observed cells differ from the source data")
        st = table.state.copy()
        st[(st == CellState.OBSERVED) & ~obs] = CellState.IMPUTED
        values.append(table.values)
        states.append(st)
    if not values:
        raise ValueError("no completed tables given")
    cfg = EngineConfig(m=len(values))
    return CompletedSet(ds, values, states, [{} for _ in values], [], cfg, order_variables(ds))
