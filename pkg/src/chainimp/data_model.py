"""Dataset representation, variable metadata and skip-pattern restrictions.

Cells carry a three-way state (observed, missing, not applicable). A fourth
code, ``IMPUTED``, only appears in completed tables produced by the engine
or the hot deck.
"""

from __future__ import annotations

import io
import json
import logging
import math
import operator
import re
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

NA_TOKEN = "NAP"
MISSING_TOKENS = frozenset({"", "NA", "nan", "NaN", "."})

KINDS = ("continuous", "categorical", "count", "semicontinuous")
TRANSFORMS = ("none", "cube-root")
ELIGIBILITY = ("imputed-and-predictor", "predictor-only", "excluded")


class CellState(IntEnum):
    OBSERVED = 0
    MISSING = 1
    NOT_APPLICABLE = 2
    IMPUTED = 3


class DataValidationError(ValueError):
    """Raised when input data or configuration fails validation."""


# ---------------------------------------------------------------------------
# Restriction rules
# ---------------------------------------------------------------------------

_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<num>-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|-?\.\d+(?:[eE][-+]?\d+)?)
      | (?P<str>'[^']*'|"[^"]*")
      | (?P<op>==|!=|<=|>=|<|>|&&|\|\|)
      | (?P<paren>[()])
      | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
    )""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Comparison:
    variable: str
    op: str
    constant: float | str


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    terms: tuple


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise DataValidationError(f"cannot parse restriction near {text[pos:]!r}")
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "name" and value.lower() in ("and", "or"):
            kind, value = "op", value.lower()
        elif kind == "op" and value in ("&&", "||"):
            value = "and" if value == "&&" else "or"
        tokens.append((kind, value))
        pos = m.end()
    return tokens


class _Parser:
    # or_expr := and_expr ("or" and_expr)*
    # and_expr := atom ("and" atom)*
    # atom := "(" or_expr ")" | name op constant
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self):
        node = self.or_expr()
        if self.i != len(self.tokens):
            raise DataValidationError(f"unexpected token {self.peek()[1]!r} in restriction")
        return node

    def or_expr(self):
        terms = [self.and_expr()]
        while self.peek() == ("op", "or"):
            self.take()
            terms.append(self.and_expr())
        return terms[0] if len(terms) == 1 else BoolOp("or", tuple(terms))

    def and_expr(self):
        terms = [self.atom()]
        while self.peek() == ("op", "and"):
            self.take()
            terms.append(self.atom())
        return terms[0] if len(terms) == 1 else BoolOp("and", tuple(terms))

    def atom(self):
        kind, value = self.take()
        if kind == "paren" and value == "(":
            node = self.or_expr()
            if self.take() != ("paren", ")"):
                raise DataValidationError("unbalanced parentheses in restriction")
            return node
        if kind != "name":
            raise DataValidationError(f"expected a variable name in restriction, got {value!r}")
        op_kind, op = self.take()
        if op_kind != "op" or op not in _OPS:
            raise DataValidationError(f"expected a comparison after {value!r}")
        c_kind, c = self.take()
        if c_kind == "num":
            const: float | str = float(c)
        elif c_kind == "str":
            const = c[1:-1]
        elif c_kind == "name":
            const = c
        else:
            raise DataValidationError(f"expected a constant after {value} {op}")
        return Comparison(value, op, const)


def _collect(node, out: list[Comparison]):
    if isinstance(node, Comparison):
        out.append(node)
    else:
        for t in node.terms:
            _collect(t, out)
    return out


@dataclass(frozen=True)
class RestrictionRule:
    """Boolean filter over comparisons joined by AND/OR.

    Example: ``"own_home == 'yes' and n_homes >= 2"``.
    """

    source: str
    tree: Any = field(compare=False, repr=False)

    @classmethod
    def parse(cls, text: str) -> "RestrictionRule":
        return cls(text, _Parser(_tokenize(text)).parse())

    @property
    def depends_on(self) -> frozenset[str]:
        return frozenset(c.variable for c in _collect(self.tree, []))

    def bind(self, specs: Mapping[str, "VariableSpec"], index: Mapping[str, int]) -> "BoundRule":
        """Resolve variable names to columns and category labels to level indices."""

        def resolve(node):
            if isinstance(node, BoolOp):
                return BoolOp(node.op, tuple(resolve(t) for t in node.terms))
            if node.variable not in specs:
                raise DataValidationError(
                    f"unknown column {node.variable!r} in restriction {self.source!r}"
                )
            spec = specs[node.variable]
            const = node.constant
            if spec.kind == "categorical":
                const = float(spec.level_index(const))
            elif isinstance(const, str):
                raise DataValidationError(
                    f"non-numeric constant {const!r} for {spec.kind} variable {spec.name!r}"
                )
            return (index[node.variable], _OPS[node.op], float(const))

        return BoundRule(self.source, resolve(self.tree))


@dataclass(frozen=True)
class BoundRule:
    source: str
    tree: Any

    def evaluate(self, values: np.ndarray, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Three-valued evaluation over all rows.

        Returns ``(truth, known)``. A comparison on a MISSING cell is unknown;
        a comparison on a NOT_APPLICABLE cell is false. AND/OR follow Kleene
        logic.
        """
        return self._eval(self.tree, values, state)

    def _eval(self, node, values, state):
        if isinstance(node, tuple):
            col, op, const = node
            st = state[:, col]
            known = st != CellState.MISSING
            with np.errstate(invalid="ignore"):
                truth = op(values[:, col], const) & known & (st != CellState.NOT_APPLICABLE)
            return truth, known
        parts = [self._eval(t, values, state) for t in node.terms]
        if node.op == "and":
            false_known = np.zeros(len(values), dtype=bool)
            all_true = np.ones(len(values), dtype=bool)
            for truth, known in parts:
                false_known |= known & ~truth
                all_true &= truth
            return all_true, all_true | false_known
        true_known = np.zeros(len(values), dtype=bool)
        all_false = np.ones(len(values), dtype=bool)
        for truth, known in parts:
            true_known |= truth
            all_false &= known & ~truth
        return true_known, true_known | all_false


# ---------------------------------------------------------------------------
# Variable metadata
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str = "continuous"
    levels: tuple[str, ...] | None = None
    transform: str = "none"
    restriction: RestrictionRule | None = None
    bounds_low: str | None = None
    bounds_high: str | None = None
    eligibility: str = "imputed-and-predictor"
    missing_sentinels: tuple[float | str, ...] = ()
    imputed_flag: tuple[str, tuple[str, ...]] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataValidationError(f"{self.name}: unknown kind {self.kind!r}")
        if self.transform not in TRANSFORMS:
            raise DataValidationError(f"{self.name}: unknown transform {self.transform!r}")
        if self.eligibility not in ELIGIBILITY:
            raise DataValidationError(f"{self.name}: unknown eligibility {self.eligibility!r}")
        if self.kind == "categorical":
            if not self.levels or len(self.levels) < 2:
                raise DataValidationError(f"{self.name}: categorical needs at least 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise DataValidationError(f"{self.name}: duplicate categorical levels")
        elif self.levels is not None:
            raise DataValidationError(f"{self.name}: levels only allowed for categorical")
        if (self.bounds_low or self.bounds_high) and self.kind not in ("continuous", "semicontinuous"):
            raise DataValidationError(
                f"{self.name}: bounds only allowed for continuous/semicontinuous variables"
            )
        if self.transform != "none" and self.kind not in ("continuous", "semicontinuous"):
            raise DataValidationError(f"{self.name}: transform only allowed for amounts")
        if self.restriction is not None and self.name in self.restriction.depends_on:
            raise DataValidationError(f"{self.name}: variable named in its own restriction")

    @property
    def restricted(self) -> bool:
        return self.restriction is not None

    @property
    def imputed(self) -> bool:
        return self.eligibility == "imputed-and-predictor"

    @property
    def predictor(self) -> bool:
        return self.eligibility != "excluded"

    def level_index(self, label) -> int:
        """Map a category label (string or number) to its level index."""
        assert self.levels is not None
        key = str(label).strip()
        try:
            return self.levels.index(key)
        except ValueError:
            pass
        try:
            x = float(key)
        except ValueError:
            raise DataValidationError(f"{self.name}: unknown level {label!r}") from None
        for i, lev in enumerate(self.levels):
            try:
                if float(lev) == x:
                    return i
            except ValueError:
                continue
        raise DataValidationError(f"{self.name}: unknown level {label!r}")

    @classmethod
    def from_config(cls, entry: Mapping[str, Any]) -> "VariableSpec":
        known = {
            "name", "kind", "levels", "transform", "restriction", "bounds_low",
            "bounds_high", "eligibility", "missing_sentinels", "imputed_flag",
        }
        extra = set(entry) - known
        if extra:
            raise DataValidationError(f"unknown config field(s) {sorted(extra)} for {entry.get('name')!r}")
        if "name" not in entry:
            raise DataValidationError("variable entry without a name")
        restriction = entry.get("restriction")
        flag = entry.get("imputed_flag")
        if flag is not None:
            flag = (str(flag["column"]), tuple(str(v) for v in flag["values"]))
        levels = entry.get("levels")
        return cls(
            name=str(entry["name"]),
            kind=entry.get("kind", "continuous"),
            levels=tuple(str(x) for x in levels) if levels is not None else None,
            transform=entry.get("transform", "none"),
            restriction=RestrictionRule.parse(restriction) if restriction else None,
            bounds_low=entry.get("bounds_low"),
            bounds_high=entry.get("bounds_high"),
            eligibility=entry.get("eligibility", "imputed-and-predictor"),
            missing_sentinels=tuple(entry.get("missing_sentinels", ())),
            imputed_flag=flag,
        )

    def to_config(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.levels is not None:
            out["levels"] = list(self.levels)
        if self.transform != "none":
            out["transform"] = self.transform
        if self.restriction is not None:
            out["restriction"] = self.restriction.source
        if self.bounds_low:
            out["bounds_low"] = self.bounds_low
        if self.bounds_high:
            out["bounds_high"] = self.bounds_high
        if self.eligibility != "imputed-and-predictor":
            out["eligibility"] = self.eligibility
        if self.missing_sentinels:
            out["missing_sentinels"] = list(self.missing_sentinels)
        if self.imputed_flag:
            out["imputed_flag"] = {"column": self.imputed_flag[0], "values": list(self.imputed_flag[1])}
        return out


def restriction_order(variables: Sequence[VariableSpec]) -> list[int]:
    """Topological order of variable indices: restricting variables first.

    Raises on cyclic restriction graphs.
    """
    index = {v.name: i for i, v in enumerate(variables)}
    order: list[int] = []
    mark: dict[int, int] = {}

    def visit(i, path):
        if mark.get(i) == 2:
            return
        if mark.get(i) == 1:
            cycle = " -> ".join(variables[k].name for k in path + [i])
            raise DataValidationError(f"cyclic restriction graph: {cycle}")
        mark[i] = 1
        rule = variables[i].restriction
        if rule is not None:
            for dep in sorted(rule.depends_on):
                if dep not in index:
                    raise DataValidationError(f"unknown column {dep!r} in restriction of {variables[i].name!r}")
                visit(index[dep], path + [i])
        mark[i] = 2
        order.append(i)

    for i in range(len(variables)):
        visit(i, [])
    return order


def restriction_ancestors(variables: Sequence[VariableSpec]) -> list[set[int]]:
    """For each variable, the transitive set of variables restricting it."""
    index = {v.name: i for i, v in enumerate(variables)}
    out: list[set[int]] = [set() for _ in variables]
    for i in restriction_order(variables):
        rule = variables[i].restriction
        if rule is None:
            continue
        for dep in rule.depends_on:
            j = index[dep]
            out[i].add(j)
            out[i] |= out[j]
    return out


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Rectangular survey table with per-cell states and optional brackets.

    ``values`` holds floats (category level indices for categorical
    variables) and is NaN wherever the cell is not observed.
    """

    variables: list[VariableSpec]
    values: np.ndarray
    state: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    aux: dict[str, np.ndarray] = field(default_factory=dict)
    weight_column: str | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise DataValidationError("duplicate variable names")
        shape = (self.values.shape[0], len(self.variables))
        for arr in (self.values, self.state, self.lower, self.upper):
            if arr.shape != shape:
                raise DataValidationError("grid is not rectangular")
        self._index = {n: i for i, n in enumerate(names)}
        self._bound_rules = None

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def col(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DataValidationError(f"unknown column {name!r}") from None

    def spec(self, name: str) -> VariableSpec:
        return self.variables[self.col(name)]

    @property
    def weights(self) -> np.ndarray | None:
        if self.weight_column is None:
            return None
        return self.aux[self.weight_column].astype(float)

    @property
    def bound_rules(self) -> list[BoundRule | None]:
        if self._bound_rules is None:
            specs = {v.name: v for v in self.variables}
            self._bound_rules = [
                v.restriction.bind(specs, self._index) if v.restriction else None
                for v in self.variables
            ]
        return self._bound_rules

    def copy(self) -> "Dataset":
        return Dataset(
            variables=list(self.variables),
            values=self.values.copy(),
            state=self.state.copy(),
            lower=self.lower.copy(),
            upper=self.upper.copy(),
            aux={k: v.copy() for k, v in self.aux.items()},
            weight_column=self.weight_column,
            warnings=list(self.warnings),
        )

    def has_bounds(self, j: int) -> bool:
        return bool(np.isfinite(self.lower[:, j]).any() or np.isfinite(self.upper[:, j]).any())

    def validate(self) -> None:
        restriction_order(self.variables)
        _ = self.bound_rules
        bad = self.lower > self.upper
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DataValidationError(
                f"inverted bounds for {self.variables[c].name!r} on row {r}: "
                f"{self.lower[r, c]} > {self.upper[r, c]}"
            )
        obs = self.state == CellState.OBSERVED
        outside = obs & ((self.values < self.lower) | (self.values > self.upper))
        if outside.any():
            r, c = np.argwhere(outside)[0]
            raise DataValidationError(
                f"observed value {self.values[r, c]} of {self.variables[c].name!r} on row {r} outside its bounds"
            )
        for j, v in enumerate(self.variables):
            x = self.values[obs[:, j], j]
            if v.kind == "count" and (np.any(x < 0) or np.any(x != np.round(x))):
                raise DataValidationError(f"non-integer value in count column {v.name!r}")
            if v.kind == "categorical" and np.any((x < 0) | (x >= len(v.levels)) | (x != np.round(x))):
                raise DataValidationError(f"unknown level in {v.name!r}")
        if (obs != ~np.isnan(self.values)).any():
            raise DataValidationError("observed cells must carry finite values")

    # -- serialization -----------------------------------------------------

    def to_frame(self, values: np.ndarray | None = None, state: np.ndarray | None = None,
                 include_aux: bool = True) -> pd.DataFrame:
        """Render as strings: NA cells become ``NAP``, missing cells empty."""
        values = self.values if values is None else values
        state = self.state if state is None else state
        cols: dict[str, Any] = {}
        for j, v in enumerate(self.variables):
            cols[v.name] = _format_column(v, values[:, j], state[:, j])
        if include_aux:
            for j, v in enumerate(self.variables):
                if v.bounds_low:
                    cols[v.bounds_low] = _format_floats(self.lower[:, j], -np.inf)
                if v.bounds_high:
                    cols[v.bounds_high] = _format_floats(self.upper[:, j], np.inf)
            for name, arr in self.aux.items():
                cols[name] = arr
        elif self.weight_column:
            cols[self.weight_column] = self.aux[self.weight_column]
        return pd.DataFrame(cols)

    def to_csv(self, path, **kw) -> None:
        self.to_frame(**kw).to_csv(path, index=False)

    def config(self) -> dict[str, Any]:
        out: dict[str, Any] = {"variables": [v.to_config() for v in self.variables]}
        if self.weight_column:
            out["weight"] = self.weight_column
        return out


def _format_floats(x: np.ndarray, empty_value: float) -> np.ndarray:
    return np.array(["" if v == empty_value or np.isnan(v) else repr(float(v)) for v in x], dtype=object)


def _format_number(v: float) -> str:
    if v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def _format_column(spec: VariableSpec, x: np.ndarray, st: np.ndarray) -> np.ndarray:
    out = np.empty(len(x), dtype=object)
    for i, (v, s) in enumerate(zip(x, st)):
        if s == CellState.NOT_APPLICABLE:
            out[i] = NA_TOKEN
        elif s == CellState.MISSING or np.isnan(v):
            out[i] = ""
        elif spec.kind == "categorical":
            out[i] = spec.levels[int(v)]
        else:
            out[i] = _format_number(v)
    return out


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def parse_config(config: Mapping[str, Any] | Sequence[Mapping[str, Any]] | str | Path) -> dict[str, Any]:
    """Normalise a config document (dict, list of variable entries, or JSON path)."""
    if isinstance(config, (str, Path)):
        try:
            with open(config, encoding="utf-8") as fh:
                config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"config is not valid JSON: {exc}") from None
    if isinstance(config, list):
        config = {"variables": config}
    if not isinstance(config, Mapping) or "variables" not in config:
        raise DataValidationError("config must be a JSON object with a 'variables' list")
    return dict(config)


def _is_token(cell: Any, tokens: Iterable[str]) -> bool:
    return isinstance(cell, str) and cell.strip() in tokens


def _is_missing_cell(cell: Any) -> bool:
    if cell is None:
        return True
    if isinstance(cell, float) and math.isnan(cell):
        return True
    return isinstance(cell, str) and cell.strip() in MISSING_TOKENS


def _sentinel_match(cell: Any, sentinels: Sequence[float | str]) -> bool:
    for s in sentinels:
        if str(cell).strip() == str(s).strip():
            return True
        try:
            if float(cell) == float(s):
                return True
        except (TypeError, ValueError):
            continue
    return False


def dataset_from_frame(frame: pd.DataFrame, config) -> Dataset:
    """Build and validate a Dataset from a DataFrame of raw cells."""
    cfg = parse_config(config)
    variables = [VariableSpec.from_config(e) for e in cfg["variables"]]
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise DataValidationError(f"duplicate column(s) in config: {dup}")
    cols = list(frame.columns)
    if len(set(cols)) != len(cols):
        dup = sorted({c for c in cols if cols.count(c) > 1})
        raise DataValidationError(f"duplicate column(s) in data: {dup}")

    aux_names: list[str] = []
    for v in variables:
        for extra in (v.bounds_low, v.bounds_high, v.imputed_flag[0] if v.imputed_flag else None):
            if extra and extra not in aux_names:
                aux_names.append(extra)
    weight = cfg.get("weight")
    if weight and weight not in aux_names:
        aux_names.append(weight)
    for name in names + aux_names:
        if name not in frame.columns:
            raise DataValidationError(f"unknown column {name!r}: declared in config but absent from data")
    unexpected = [c for c in cols if c not in names and c not in aux_names]
    if unexpected:
        raise DataValidationError(f"data column(s) {unexpected} not declared in config")

    n, p = len(frame), len(variables)
    values = np.full((n, p), np.nan)
    state = np.full((n, p), CellState.MISSING, dtype=np.int8)
    lower = np.full((n, p), -np.inf)
    upper = np.full((n, p), np.inf)
    for j, v in enumerate(variables):
        raw = frame[v.name].to_numpy(dtype=object)
        for i, cell in enumerate(raw):
            if _is_token(cell, (NA_TOKEN,)):
                state[i, j] = CellState.NOT_APPLICABLE
            elif _is_missing_cell(cell):
                continue
            elif v.kind == "categorical":
                if _sentinel_match(cell, v.missing_sentinels):
                    continue  # sentinel codes need not be declared levels
                values[i, j] = v.level_index(cell)
                state[i, j] = CellState.OBSERVED
            else:
                try:
                    values[i, j] = float(cell)
                except (TypeError, ValueError):
                    raise DataValidationError(f"non-numeric value {cell!r} in column {v.name!r} row {i}") from None
                state[i, j] = CellState.OBSERVED
        for attr, target, empty in ((v.bounds_low, lower, -np.inf), (v.bounds_high, upper, np.inf)):
            if not attr:
                continue
            raw = frame[attr].to_numpy(dtype=object)
            for i, cell in enumerate(raw):
                if not _is_missing_cell(cell):
                    try:
                        target[i, j] = float(cell)
                    except (TypeError, ValueError):
                        raise DataValidationError(f"non-numeric bound {cell!r} in column {attr!r}") from None
    aux = {
        name: np.array(["" if _is_missing_cell(c) else str(c) for c in frame[name].to_numpy(dtype=object)],
                       dtype=object)
        for name in aux_names
    }

    ds = Dataset(variables, values, state, lower, upper, aux=aux, weight_column=weight)
    rules = []
    for v in variables:
        if v.missing_sentinels:
            rules.append((v.name, ("sentinel", v.missing_sentinels)))
        if v.imputed_flag:
            rules.append((v.name, ("flag", v.imputed_flag[0], v.imputed_flag[1])))
    ds = recode_missing(ds, rules)
    ds.validate()
    return sync_restrictions(ds)


def load_dataset(csv_table, config) -> Dataset:
    """Load a UTF-8 CSV (path, buffer or text) against a JSON config."""
    if isinstance(csv_table, str) and "\n" in csv_table:
        csv_table = io.StringIO(csv_table)
    try:
        frame = pd.read_csv(csv_table, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataValidationError(f"cannot parse data: {exc}") from None
    # pandas silently renames duplicate headers to "x.1"; detect from the raw header
    if isinstance(csv_table, (str, Path)):
        with open(csv_table, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\r\n").split(",")
    else:
        csv_table.seek(0)
        header = csv_table.readline().rstrip("\r\n").split(",")
    header = [h.strip().strip('"') for h in header]
    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise DataValidationError(f"duplicate column(s) in data: {dup}")
    return dataset_from_frame(frame, config)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def recode_missing(ds: Dataset, rules: Sequence[tuple[str, tuple]]) -> Dataset:
    """Turn sentinel-coded and flag-marked cells into MISSING.

    Each rule is ``(variable, ("sentinel", values))`` or
    ``(variable, ("flag", flag_column, imputed_codes))``. A flag column whose
    value is not among ``imputed_codes`` (e.g. an "edited" code) leaves the
    cell observed.
    """
    out = ds.copy()
    for name, rule in rules:
        j = out.col(name)
        obs = out.state[:, j] == CellState.OBSERVED
        if rule[0] == "sentinel":
            spec = out.variables[j]
            cells = out.values[:, j]
            if spec.kind == "categorical":
                cells = [spec.levels[int(x)] if o else None for x, o in zip(cells, obs)]
            hit = obs & np.array([_sentinel_match(x, rule[1]) for x in cells], dtype=bool)
        elif rule[0] == "flag":
            column, codes = rule[1], {str(c).strip() for c in rule[2]}
            if column not in out.aux:
                raise DataValidationError(f"unknown column {column!r} in flag rule for {name!r}")
            flags = np.array([str(f).strip() in codes for f in out.aux[column]])
            hit = obs & flags
        else:
            raise DataValidationError(f"unknown recode rule {rule[0]!r}")
        out.values[hit, j] = np.nan
        out.state[hit, j] = CellState.MISSING
    return out


def missingness_profile(ds: Dataset) -> pd.DataFrame:
    """Apparent (missing + not applicable) and true (missing) percentages."""
    n = max(ds.n_rows, 1)
    miss = (ds.state == CellState.MISSING).sum(axis=0)
    nap = (ds.state == CellState.NOT_APPLICABLE).sum(axis=0)
    return pd.DataFrame(
        {
            "variable": ds.names,
            "apparent_pct": 100.0 * (miss + nap) / n,
            "true_pct": 100.0 * miss / n,
        }
    )


def write_profile(ds: Dataset, path) -> None:
    missingness_profile(ds).to_csv(path, index=False, float_format="%.2f")


def sync_restrictions(ds: Dataset) -> Dataset:
    """Make cell states agree with the restriction rules.

    Rule false: the cell becomes NOT_APPLICABLE (an observed value there is
    discarded with a warning). Rule true on a NOT_APPLICABLE cell: the cell
    becomes MISSING. Rule undeterminable: a NOT_APPLICABLE cell becomes
    MISSING and is resolved once its filter is imputed.
    """
    out = ds.copy()
    rules = out.bound_rules
    for j in restriction_order(out.variables):
        rule = rules[j]
        if rule is None:
            continue
        truth, known = rule.evaluate(out.values, out.state)
        false = known & ~truth
        st = out.state[:, j]
        dropped = false & (st == CellState.OBSERVED)
        if dropped.any():
            msg = (f"{out.variables[j].name}: {int(dropped.sum())} observed value(s) on rows where "
                   f"the restriction is false were recoded as not applicable")
            out.warnings.append(msg)
            logger.warning(msg)
        out.values[false, j] = np.nan
        st[false] = CellState.NOT_APPLICABLE
        st[~false & (st == CellState.NOT_APPLICABLE)] = CellState.MISSING
    return out


def required_applicable(ds: Dataset) -> np.ndarray:
    """Cells whose restriction must end up true.

    A cell is required when it is observed, or when a variable it restricts
    is required on the same row. Imputations of filters are constrained so
    that these rules hold.
    """
    req = ds.state == CellState.OBSERVED
    req &= np.array([v.restricted for v in ds.variables])[None, :]
    index = {v.name: i for i, v in enumerate(ds.variables)}
    for j in reversed(restriction_order(ds.variables)):
        rule = ds.variables[j].restriction
        if rule is None:
            continue
        for dep in rule.depends_on:
            k = index[dep]
            if ds.variables[k].restricted:
                req[:, k] |= req[:, j]
    return req


def with_variables(ds: Dataset, **changes) -> Dataset:
    """Return a copy with some VariableSpec fields replaced, by variable name."""
    variables = [replace(v, **changes[v.name]) if v.name in changes else v for v in ds.variables]
    out = ds.copy()
    out.variables = variables
    out.__post_init__()
    return out
