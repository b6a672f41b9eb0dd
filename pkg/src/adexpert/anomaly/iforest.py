"""Isolation forest with a contamination-calibrated decision offset."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from adexpert.mlcore.rng import keyed_rng

EULER_GAMMA = 0.5772156649015329

_SUBSAMPLE_NODE = 2**32 - 1


def harmonic(i: float) -> float:
    return math.log(i) + EULER_GAMMA


def c_factor(n: int) -> float:
    """Average unsuccessful-search path length in a binary search tree of
    ``n`` points; normalizes isolation depths."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass(frozen=True)
class IsolationForestParams:
    n_trees: int = 100
    subsample_size: int = 256
    contamination: float = 0.05
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.subsample_size < 2:
            raise ValueError("subsample_size must be >= 2")
        if not 0.0 < self.contamination <= 0.5:
            raise ValueError("contamination must be in (0, 0.5]")


@dataclass(frozen=True)
class IsolationTree:
    """Flat tree; ``feature == -1`` marks an external node of ``size``
    training points. Points with ``x[feature] < threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    credit: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "credit", np.array([c_factor(int(s)) for s in self.size]))

    def leaf_of(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            a = node[active]
            go_left = X[rows[active], f[active]] < self.threshold[a]
            node[active] = np.where(go_left, self.left[a], self.right[a])

    def path_length(self, X: np.ndarray) -> np.ndarray:
        """Depth of the external node reached plus ``c(size)`` for the
        training points it still holds."""
        leaf = self.leaf_of(np.asarray(X, dtype=float))
        return self.depth[leaf] + self.credit[leaf]

    @property
    def height(self) -> int:
        return int(self.depth.max())


def build_isolation_tree(X: np.ndarray, height_limit: int, seed: int, tree_index: int) -> IsolationTree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(n)
        depth.append(d)
        return len(feature) - 1

    stack = [(new_node(X.shape[0], 0), np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size <= 1 or depth[node] >= height_limit:
            continue
        Xn = X[idx]
        lo, hi = Xn.min(axis=0), Xn.max(axis=0)
        varying = np.flatnonzero(hi > lo)
        if varying.size == 0:
            continue
        rng = keyed_rng(seed, tree_index, node)
        f = int(varying[rng.integers(varying.size)])
        while True:
            p = rng.uniform(lo[f], hi[f])
            go_left = Xn[:, f] < p
            if 0 < go_left.sum() < idx.size:
                break
        feature[node] = f
        threshold[node] = float(p)
        left[node] = new_node(int(go_left.sum()), depth[node] + 1)
        right[node] = new_node(int(idx.size - go_left.sum()), depth[node] + 1)
        stack.append((right[node], idx[~go_left]))
        stack.append((left[node], idx[go_left]))
    return IsolationTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(size, dtype=np.int64),
        np.asarray(depth, dtype=np.int64),
    )


@dataclass(frozen=True)
class IsolationForestModel:
    trees: tuple[IsolationTree, ...]
    subsample_size: int
    n_features: int
    params: IsolationForestParams
    offset: float = 0.0
    training_flags: int = field(default=0, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def contamination(self) -> float:
        return self.params.contamination

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def mean_path_length(self, X) -> np.ndarray:
        X = self._check(X)
        return np.mean([t.path_length(X) for t in self.trees], axis=0)

    def score(self, X) -> np.ndarray:
        """Anomaly score ``2 ** (-E[h] / c(psi))`` in (0, 1); near 1 is anomalous."""
        return np.power(2.0, -self.mean_path_length(X) / c_factor(self.subsample_size))


def calibrate_offset(raw: np.ndarray, n_flagged: int) -> float:
    """Offset such that exactly ``n_flagged`` of ``raw - offset`` are < 0,
    when the order statistics at the cut are distinct. Equal values at the
    cut are ranked by sample index, which a scalar cut cannot separate; the
    count then includes the whole tied group."""
    order = np.lexsort((np.arange(raw.size), raw))
    v = raw[order]
    if n_flagged >= raw.size:
        return float(v[-1] + 1.0)
    lo, hi = v[n_flagged - 1], v[n_flagged]
    if lo == hi:
        return float(np.nextafter(lo, np.inf))
    mid = lo + (hi - lo) / 2.0
    return float(mid if lo < mid <= hi else hi)


def n_flagged_for(contamination: float, n: int) -> int:
    # round first so float noise such as 0.07 * 100 = 7.000000000000001 cannot bump the ceiling
    return math.ceil(round(contamination * n, 9))


def fit_isolation_forest(X, params: IsolationForestParams | None = None) -> IsolationForestModel:
    params = params or IsolationForestParams()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("isolation forest needs at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("isolation forest input must be finite")
    if np.all(np.ptp(X, axis=0) == 0):
        raise ValueError("every feature is constant: no split is possible")
    n = X.shape[0]
    psi = min(params.subsample_size, n)
    height_limit = math.ceil(math.log2(psi))

    def grow(t: int) -> IsolationTree:
        sample = keyed_rng(params.seed, t, _SUBSAMPLE_NODE).choice(n, size=psi, replace=False)
        return build_isolation_tree(X[sample], height_limit, params.seed, t)

    if params.n_jobs > 1:
        with ThreadPoolExecutor(params.n_jobs) as pool:
            trees = tuple(pool.map(grow, range(params.n_trees)))
    else:
        trees = tuple(grow(t) for t in range(params.n_trees))
    model = IsolationForestModel(trees, psi, X.shape[1], params)
    raw = 0.5 - model.score(X)
    n_flagged = n_flagged_for(params.contamination, n)
    offset = calibrate_offset(raw, n_flagged)
    return IsolationForestModel(trees, psi, X.shape[1], params, offset, int(np.sum(raw - offset < 0)))


def anomaly_scores(model: IsolationForestModel, X) -> np.ndarray:
    """Decision values ``(0.5 - s) - offset``: negative means anomalous,
    more negative means more anomalous."""
    return (0.5 - model.score(X)) - model.offset
