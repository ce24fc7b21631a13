"""Base regression models wrapped by market agents.

Every learner is refit each week on the full growing window of history and
predicts the fractional ILI rate for the next row, clamped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .ingest import TimeSeriesFrame

KINDS = ("ols", "ridge", "knn", "cart", "bagged_tree", "mean", "persistence", "passthrough")

DEFAULTS: dict[str, dict[str, float]] = {
    "ols": {},
    "ridge": {"lam": 1e-3},
    "knn": {"k": 5},
    "cart": {"max_depth": 4, "min_leaf": 5},
    "bagged_tree": {"n_trees": 25, "bootstrap_fraction": 1.0, "max_depth": 4, "min_leaf": 5},
    "mean": {},
    "persistence": {"scale": 1.0},
    "passthrough": {"scale": 1.0},
}
INTEGER_PARAMS = {"k", "max_depth", "min_leaf", "n_trees"}

MIN_HISTORY = 4
COND_LIMIT = 1e12
FALLBACK_LAMBDA = 1e-6


class LearnerError(Exception):
    """A learner produced no usable prediction; the agent abstains."""


class ColdStart(LearnerError):
    """Not enough history to fit."""


@dataclass
class LearnerSpec:
    kind: str
    hyperparameters: dict[str, float] = field(default_factory=dict)
    feature_mask: list[str] = field(default_factory=list)
    standardize: bool | None = None
    column: str | None = None  # designated input of persistence/passthrough

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown hyperparameter(s) for {self.kind}: {sorted(unknown)}")
        params = {**DEFAULTS[self.kind], **self.hyperparameters}
        for name in INTEGER_PARAMS & set(params):
            if params[name] != int(params[name]) or params[name] < 1:
                raise ValueError(f"{name} must be a positive integer")
            params[name] = int(params[name])
        self.params = params
        if self.kind in ("persistence", "passthrough"):
            if self.column is None:
                if self.kind == "passthrough":
                    raise ValueError("passthrough learner needs a designated column")
                self.column = "cdc_ili"
        elif not self.feature_mask:
            raise ValueError(f"{self.kind} learner needs a nonempty feature mask")
        if self.standardize is None:
            self.standardize = self.kind in ("ols", "ridge", "knn")

    @property
    def inputs(self) -> list[str]:
        return [self.column] if self.kind in ("persistence", "passthrough") else list(self.feature_mask)


# --- models ---------------------------------------------------------------------

class FittedModel:
    inputs: list[str]

    def predict(self, features: Mapping[str, float] | np.ndarray) -> float:
        x = self._vector(features)
        value = float(self._raw(x))
        if not math.isfinite(value):
            raise LearnerError("non-finite prediction")
        return min(1.0, max(0.0, value))

    def _vector(self, features) -> np.ndarray:
        if isinstance(features, Mapping):
            try:
                return np.array([features[c] for c in self.inputs], dtype=float)
            except KeyError as e:
                raise LearnerError(f"missing feature {e}") from None
        return np.asarray(features, dtype=float)

    def _raw(self, x: np.ndarray) -> float:
        raise NotImplementedError


class _Scaler:
    def __init__(self, X: np.ndarray, enabled: bool):
        if enabled:
            self.mu = X.mean(axis=0)
            sd = X.std(axis=0)
            self.sd = np.where(sd > 0, sd, 1.0)
        else:
            self.mu = np.zeros(X.shape[1])
            self.sd = np.ones(X.shape[1])

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mu) / self.sd


class LinearModel(FittedModel):
    """Least squares with an unpenalized intercept; ``lam`` > 0 gives ridge."""

    def __init__(self, X, y, inputs, lam: float, standardize: bool, fallback: bool):
        self.inputs = inputs
        self.scaler = _Scaler(X, standardize)
        Z = np.column_stack([self.scaler(X), np.ones(len(X))])
        gram = Z.T @ Z
        rhs = Z.T @ y
        penalty = np.eye(Z.shape[1])
        penalty[-1, -1] = 0.0
        self.lam = lam
        if fallback and (lam == 0 and np.linalg.cond(gram) > COND_LIMIT):
            self.lam = FALLBACK_LAMBDA
        try:
            beta = np.linalg.solve(gram + self.lam * penalty, rhs)
        except np.linalg.LinAlgError:
            beta = np.linalg.lstsq(gram + self.lam * penalty, rhs, rcond=None)[0]
        self.beta = beta

    @property
    def coefficients(self) -> tuple[np.ndarray, float]:
        """Slopes and intercept on the original feature scale."""
        w = self.beta[:-1] / self.scaler.sd
        return w, float(self.beta[-1] - w @ self.scaler.mu)

    def _raw(self, x):
        return self.scaler(x) @ self.beta[:-1] + self.beta[-1]


class KNNModel(FittedModel):
    def __init__(self, X, y, inputs, k: int, standardize: bool):
        self.inputs = inputs
        self.scaler = _Scaler(X, standardize)
        self.Z = self.scaler(X)
        self.y = y
        self.k = min(k, len(y))

    def neighbours(self, x: np.ndarray) -> np.ndarray:
        d = np.sum((self.Z - self.scaler(x)) ** 2, axis=1)
        return np.argsort(d, kind="stable")[: self.k]

    def _raw(self, x):
        return self.y[self.neighbours(x)].mean()


class MeanModel(FittedModel):
    def __init__(self, y, inputs):
        self.inputs = inputs
        self.value = float(np.mean(y))

    def _raw(self, x):
        return self.value


class ColumnModel(FittedModel):
    """Emits one designated input column, optionally rescaled."""

    def __init__(self, column: str, scale: float):
        self.inputs = [column]
        self.scale = scale

    def _raw(self, x):
        return x[0] * self.scale


# --- regression trees -----------------------------------------------------------

def _grow(XT: np.ndarray, y: np.ndarray, order: np.ndarray, depth: int, max_depth: int, min_leaf: int,
          nodes: list, value: float | None = None) -> int:
    """Append a subtree for the rows in ``order`` to ``nodes`` and return its index.

    ``XT`` is the feature-major design (features x rows). ``order[j]`` lists
    this node's row ids sorted by feature j; children filter it rather than
    re-sort. The best split minimizes left + right SSE, i.e. maximizes
    sl^2/nl + sr^2/nr. Nodes are ``[feature, threshold, left, right, value]``;
    leaves have feature -1.
    """
    node = len(nodes)
    k, n = order.shape
    ys = y[order]
    nodes.append([-1, 0.0, -1, -1, float(ys[0].mean()) if value is None else value])
    if depth >= max_depth or n < 2 * min_leaf or k == 0:
        return node

    cs = np.cumsum(ys, axis=1)
    total = cs[0, -1]
    sl = cs[:, :-1]
    nl = np.arange(1, n, dtype=float)
    score = sl * sl
    score *= 1.0 / nl
    sr = total - sl
    sr *= sr
    sr *= 1.0 / (n - nl)
    score += sr
    xs = np.take_along_axis(XT, order, axis=1)
    invalid = xs[:, 1:] <= xs[:, :-1]
    invalid[:, : min_leaf - 1] = True
    invalid[:, n - min_leaf:] = True
    score[invalid] = -np.inf
    flat = int(np.argmax(score))  # feature-major so ties go to the first feature
    j, i = divmod(flat, n - 1)
    if not np.isfinite(score[j, i]):
        return node
    parent_sse = float(((ys[0] - total / n) ** 2).sum())
    if not score[j, i] - total * total / n > 1e-15 * max(1.0, parent_sse):
        return node

    threshold = 0.5 * (xs[j, i] + xs[j, i + 1])
    nodes[node][0], nodes[node][1] = j, float(threshold)
    n_left = i + 1
    left_value = float(ys[j, :n_left].mean())
    right_value = float(ys[j, n_left:].mean())
    if depth + 1 >= max_depth:
        # both children are leaves; their means come straight from the winning column
        nodes[node][2] = len(nodes)
        nodes.append([-1, 0.0, -1, -1, left_value])
        nodes[node][3] = len(nodes)
        nodes.append([-1, 0.0, -1, -1, right_value])
        return node
    mask = (XT[j] <= threshold)[order]
    nodes[node][2] = _grow(XT, y, order[mask].reshape(k, n_left), depth + 1, max_depth, min_leaf, nodes,
                           left_value)
    nodes[node][3] = _grow(XT, y, order[~mask].reshape(k, n - n_left), depth + 1, max_depth, min_leaf, nodes,
                           right_value)
    return node


def _presort(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    XT = np.ascontiguousarray(np.asarray(X, dtype=float).T)
    return XT, np.argsort(XT, axis=1, kind="stable").astype(np.int32)


class Tree:
    def __init__(self, X, y, max_depth: int, min_leaf: int, presorted=None, counts=None):
        """Fit on rows of ``X``; ``counts`` (bootstrap multiplicities) repeats rows without copying X."""
        XT, order = presorted if presorted is not None else _presort(X)
        if counts is not None:
            k, n = order.shape
            flat = order.ravel()
            order = np.repeat(flat, counts[flat]).reshape(k, -1)
        self.nodes: list = []
        _grow(XT, np.asarray(y, dtype=float), order, 0, max_depth, min_leaf, self.nodes)

    def __call__(self, x: np.ndarray) -> float:
        node = self.nodes[0]
        while node[0] >= 0:
            node = self.nodes[node[2] if x[node[0]] <= node[1] else node[3]]
        return node[4]


class TreeModel(FittedModel):
    def __init__(self, X, y, inputs, max_depth, min_leaf):
        self.inputs = inputs
        self.tree = Tree(X, y, max_depth, min_leaf)

    def _raw(self, x):
        return self.tree(x)


class BaggedTreeModel(FittedModel):
    def __init__(self, X, y, inputs, n_trees, fraction, max_depth, min_leaf, seed):
        self.inputs = inputs
        n = len(y)
        m = max(1, int(round(fraction * n)))
        self.trees = []
        presorted = _presort(X)
        for j in range(n_trees):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,)))
            rows = rng.integers(0, n, size=m)
            counts = np.bincount(rows, minlength=n)
            self.trees.append(Tree(X, y, max_depth, min_leaf, presorted, counts))

    def _raw(self, x):
        return float(np.mean([t(x) for t in self.trees]))


# --- fit ------------------------------------------------------------------------

def min_history(spec: LearnerSpec) -> int:
    if spec.kind in ("persistence", "passthrough"):
        return 0
    if spec.kind in ("ols", "ridge"):
        return max(MIN_HISTORY, len(spec.feature_mask) + 1)
    return MIN_HISTORY


def fit(spec: LearnerSpec, history: TimeSeriesFrame, seed: int = 0) -> FittedModel:
    """Fit ``spec`` on every complete row of ``history`` (weeks before the one predicted).

    Raises :class:`ColdStart` when history is too short.
    """
    p = spec.params
    if spec.kind == "persistence" or spec.kind == "passthrough":
        return ColumnModel(spec.column, p["scale"])

    inputs = list(spec.feature_mask)
    missing = [c for c in inputs if c not in history.columns]
    if missing:
        raise LearnerError(f"history lacks feature(s) {missing}")
    if history.target is None:
        raise ColdStart("history has no target")
    X = history.matrix(inputs)
    y = history.target
    ok = ~np.isnan(y) & ~np.isnan(X).any(axis=1)
    X, y = X[ok], y[ok]
    if len(y) < min_history(spec):
        raise ColdStart(f"{spec.kind} needs {min_history(spec)} rows, has {len(y)}")

    if spec.kind == "mean":
        return MeanModel(y, inputs)
    if spec.kind == "ols":
        return LinearModel(X, y, inputs, 0.0, spec.standardize, fallback=True)
    if spec.kind == "ridge":
        return LinearModel(X, y, inputs, float(p["lam"]), spec.standardize, fallback=False)
    if spec.kind == "knn":
        return KNNModel(X, y, inputs, p["k"], spec.standardize)
    if spec.kind == "cart":
        return TreeModel(X, y, inputs, p["max_depth"], p["min_leaf"])
    return BaggedTreeModel(X, y, inputs, p["n_trees"], float(p["bootstrap_fraction"]),
                           p["max_depth"], p["min_leaf"], seed)


def predict(model: FittedModel, features: Mapping[str, float] | np.ndarray) -> float:
    return model.predict(features)
