"""Predictor screening: dummy expansion, collinearity removal, forward selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import CellState, VariableSpec
from .transforms import forward

COLLINEAR_TOL = 1e-6


@dataclass(frozen=True)
class SelectionConfig:
    min_r2_increase: float = 0.005
    max_predictors: int = 10

    def __post_init__(self):
        if not 0.0 < self.min_r2_increase < 1.0:
            raise ValueError("min_r2_increase must lie in (0, 1)")
        if self.max_predictors < 1:
            raise ValueError("max_predictors must be at least 1")


@dataclass
class Pool:
    """Candidate design columns (no intercept) with a label per column."""

    matrix: np.ndarray
    labels: list[str]
    sources: list[str] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    def take(self, idx) -> "Pool":
        idx = list(idx)
        return Pool(self.matrix[:, idx], [self.labels[i] for i in idx],
                    [self.sources[i] for i in idx] if self.sources else [])


@dataclass
class SelectionResult:
    selected: list[int]
    r2_trace: list[float]
    delta_trace: list[float]

    @property
    def r2(self) -> float:
        return self.r2_trace[-1] if self.r2_trace else 0.0


def variable_columns(spec: VariableSpec, values: np.ndarray, state: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Design columns contributed by one predictor variable.

    Categorical: K-1 indicators against the most frequent level. Semicontinuous:
    nonzero indicator plus the (transformed) amount. Not-applicable cells are
    coded 0 and get an extra ``<name>:na`` indicator.
    """
    na = state == CellState.NOT_APPLICABLE
    x = np.where(na, 0.0, values)
    cols: list[np.ndarray] = []
    labels: list[str] = []
    if spec.kind == "categorical":
        codes = x.astype(int)
        counts = np.bincount(codes[~na], minlength=len(spec.levels))
        ref = int(np.argmax(counts))
        for k in range(len(spec.levels)):
            if k == ref or counts[k] == 0:
                continue
            cols.append(((codes == k) & ~na).astype(float))
            labels.append(f"{spec.name}={spec.levels[k]}")
    elif spec.kind == "semicontinuous":
        cols.append((x != 0).astype(float))
        labels.append(f"{spec.name}:nz")
        cols.append(forward(spec.transform, x))
        labels.append(spec.name)
    else:
        cols.append(forward(spec.transform, x) if spec.kind == "continuous" else x.astype(float))
        labels.append(spec.name)
    if na.any():
        cols.append(na.astype(float))
        labels.append(f"{spec.name}:na")
    matrix = np.column_stack(cols) if cols else np.empty((len(values), 0))
    return matrix, labels


def expand_dummies(specs, values: np.ndarray, state: np.ndarray) -> Pool:
    """Design-column pool for the given predictor variables.

    ``values``/``state`` are (n, len(specs)) arrays aligned with ``specs``.
    """
    blocks, labels, sources = [], [], []
    for j, spec in enumerate(specs):
        m, lab = variable_columns(spec, values[:, j], state[:, j])
        blocks.append(m)
        labels += lab
        sources += [spec.name] * len(lab)
    n = values.shape[0]
    matrix = np.hstack(blocks) if blocks else np.empty((n, 0))
    return Pool(matrix, labels, sources)


def screen_collinear(columns: np.ndarray, tol: float = COLLINEAR_TOL) -> tuple[list[int], list[int]]:
    """Greedy in-order scan that drops columns lying in the span of earlier ones.

    An intercept is placed first and always retained. Column j is dropped
    when its residual norm after projection onto the retained columns falls
    below ``tol`` times its own norm. One Householder QR gives all the
    residual norms at once: |R[j, j]| is the distance of column j from the
    span of the columns before it, and dropped columns add nothing to that
    span.

    Returns ``(retained, dropped)`` as indices into ``columns``.
    """
    X = np.asarray(columns, float)
    n, p = X.shape
    if p == 0:
        return [], []
    norms = np.linalg.norm(X, axis=0)
    A = np.column_stack([np.ones(n), X])
    if n >= A.shape[1]:
        r = np.linalg.qr(A, mode="r")
        resid = np.abs(np.diag(r))[1:]
    else:
        resid = _sequential_residuals(A)[1:]
    keep = (norms > 0) & (resid > tol * norms)
    if n < A.shape[1]:
        # only n independent directions exist; later columns are dependent
        keep &= np.cumsum(keep) <= n - 1
    retained = [int(i) for i in np.nonzero(keep)[0]]
    dropped = [int(i) for i in np.nonzero(~keep)[0]]
    return retained, dropped


def _sequential_residuals(A: np.ndarray) -> np.ndarray:
    # modified Gram-Schmidt with reorthogonalization, for short-and-wide inputs
    n, p = A.shape
    basis = np.empty((n, 0))
    out = np.empty(p)
    for j in range(p):
        v = A[:, j].copy()
        for _ in range(2):
            v -= basis @ (basis.T @ v)
        out[j] = np.linalg.norm(v)
        if out[j] > COLLINEAR_TOL * max(np.linalg.norm(A[:, j]), 1e-300) and basis.shape[1] < n:
            basis = np.column_stack([basis, v / out[j]])
    return out


def forward_select(y: np.ndarray, pool: np.ndarray, cfg: SelectionConfig = SelectionConfig(),
                   tol: float = COLLINEAR_TOL) -> SelectionResult:
    """Greedy forward selection on the marginal increase in linear R^2.

    Starts from the intercept; at each step adds the column with the largest
    R^2 increase (first in pool order on ties). Stops when the best increase
    is below ``cfg.min_r2_increase`` or ``cfg.max_predictors`` columns are in.
    ``y`` may be a matrix of working responses, in which case R^2 is pooled
    over its columns (explained over total sum of squares).
    """
    Y = np.asarray(y, float)
    if Y.ndim == 1:
        Y = Y[:, None]
    Z = np.asarray(pool, float)
    n = Y.shape[0]
    if Z.ndim != 2 or Z.shape[0] != n:
        raise ValueError("pool must be an (n, k) matrix")
    R = Y - Y.mean(axis=0)
    sst = float(np.sum(R * R))
    result = SelectionResult([], [], [])
    if sst <= 1e-12 * max(1.0, float(np.sum(Y * Y))) or Z.shape[1] == 0:
        return result
    Z = Z - Z.mean(axis=0)
    orig = np.sum(Z * Z, axis=0)
    zz = orig.copy()
    available = orig > 0
    r2 = 0.0
    while len(result.selected) < cfg.max_predictors:
        usable = available & (zz > (tol**2) * orig)
        if not usable.any():
            break
        proj = Z.T @ R  # (k, q)
        gain = np.zeros(Z.shape[1])
        gain[usable] = np.sum(proj[usable] ** 2, axis=1) / zz[usable]
        best = int(np.argmax(gain))
        delta = gain[best] / sst
        if not usable[best] or delta < cfg.min_r2_increase:
            break
        q = Z[:, best] / np.sqrt(zz[best])
        R -= np.outer(q, q @ R)
        Z -= np.outer(q, q @ Z)
        zz = np.sum(Z * Z, axis=0)
        available[best] = False
        r2 += delta
        result.selected.append(best)
        result.r2_trace.append(r2)
        result.delta_trace.append(delta)
    return result
