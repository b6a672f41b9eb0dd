"""Gini decision trees and bootstrap random forests.

Every random draw comes from a stream keyed by ``(seed, tree, node)``, so a
forest is bit-identical whether its trees are grown sequentially or on a
thread pool.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from adexpert.mlcore.rng import keyed_rng

FORMAT = "adexpert.random_forest"
FORMAT_VERSION = 1

# reserved node key for the bootstrap draw; real node ids never reach it
_BOOTSTRAP_NODE = 2**32 - 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_features: str = "sqrt"  # sqrt | log2 | all
    max_depth: int | None = None
    min_samples_leaf: int = 1
    seed: int = 0
    n_jobs: int = 1

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_features": self.max_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "seed": self.seed,
        }


def n_candidate_features(rule: str, n_features: int) -> int:
    if rule == "sqrt":
        m = int(np.sqrt(n_features))
    elif rule == "log2":
        m = int(np.log2(n_features)) if n_features > 1 else 1
    elif rule == "all":
        m = n_features
    else:
        raise ValueError(f"unknown max_features rule {rule!r}")
    return max(1, min(m, n_features))


@dataclass(frozen=True)
class DecisionTree:
    """Flat tree. ``feature[i] == -1`` marks a leaf; ``value[i]`` holds the
    class counts of the training samples that reached node ``i``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            go_left = X[rows[active], f[active]] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.argmax(self.value[self.apply(X)], axis=1)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DecisionTree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=float),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=np.int64).reshape(len(doc["feature"]), -1),
        )


def _best_split(Xn: np.ndarray, Yn: np.ndarray, features: np.ndarray, min_leaf: int):
    """Lowest weighted child Gini over ``features`` (ascending). Returns
    ``(feature, threshold)`` or ``None``. Ties keep the lowest feature index,
    then the lowest threshold."""
    m = Xn.shape[0]
    sub = Xn[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    vals = np.take_along_axis(sub, order, axis=0)
    counts = np.cumsum(Yn[order], axis=0)[:-1]  # (m-1, f, C): left counts
    n_left = np.arange(1, m, dtype=float)[:, None]
    n_right = m - n_left
    right = Yn.sum(axis=0) - counts
    # maximizing sum(c_l^2)/n_l + sum(c_r^2)/n_r minimizes weighted Gini
    score = (counts**2).sum(axis=2) / n_left + (right**2).sum(axis=2) / n_right
    valid = vals[:-1] < vals[1:]
    if min_leaf > 1:
        valid &= (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    pos, j = np.unravel_index(np.argmax(score.T.reshape(-1)), (len(features), m - 1))[::-1]
    lo, hi = vals[pos, j], vals[pos + 1, j]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return int(features[j]), float(thr)


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    rule: str,
    seed: int,
    tree_index: int,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
) -> DecisionTree:
    n, p = X.shape
    mtry = n_candidate_features(rule, p)
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        if (
            np.count_nonzero(counts) <= 1
            or idx.size < 2 * min_samples_leaf
            or (max_depth is not None and depth >= max_depth)
        ):
            continue
        Xn = X[idx]
        varying = np.ptp(Xn, axis=0) > 0
        if not varying.any():
            continue
        # draw features in a random order, skipping ones constant in this node
        perm = keyed_rng(seed, tree_index, node).permutation(p)
        candidates = perm[varying[perm]]
        split = None
        # if the first mtry candidates cannot split (min_samples_leaf), widen the draw
        for stop in (mtry, candidates.size):
            split = _best_split(Xn, Y[idx], np.sort(candidates[:stop]), min_samples_leaf)
            if split is not None or stop >= candidates.size:
                break
        if split is None:
            continue
        f, thr = split
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right first so the left subtree is numbered first (preorder)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return DecisionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.int64).reshape(len(feature), n_classes),
    )


@dataclass(frozen=True)
class RandomForestModel:
    trees: tuple[DecisionTree, ...]
    n_features: int
    n_classes: int
    params: ForestParams = field(default_factory=ForestParams)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_votes(self, X) -> np.ndarray:
        """(n_samples, n_classes) count of trees voting for each class."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict(X)), 1)
        return votes

    def vote_fractions(self, X) -> np.ndarray:
        return self.tree_votes(X) / self.n_trees

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "params": self.params.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RandomForestModel":
        if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"not a {FORMAT} v{FORMAT_VERSION} document")
        return cls(
            tuple(DecisionTree.from_dict(t) for t in doc["trees"]),
            int(doc["n_features"]),
            int(doc["n_classes"]),
            ForestParams(**doc["params"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RandomForestModel":
        return cls.from_dict(json.loads(text))


def bootstrap_indices(n: int, seed: int, tree_index: int) -> np.ndarray:
    return keyed_rng(seed, tree_index, _BOOTSTRAP_NODE).integers(0, n, size=n)


def fit_random_forest(
    X,
    y,
    params: ForestParams | None = None,
    n_classes: int | None = None,
    **overrides,
) -> RandomForestModel:
    params = params or ForestParams()
    if overrides:
        params = ForestParams(**{**params.to_dict(), "n_jobs": params.n_jobs, **overrides})
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    if X.shape[0] != y.shape[0]:
        raise ValueError("one label per row required")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n_classes = n_classes or int(y.max()) + 1
    n_candidate_features(params.max_features, X.shape[1])

    def grow(t: int) -> DecisionTree:
        idx = bootstrap_indices(X.shape[0], params.seed, t)
        return build_tree(
            X[idx], y[idx], n_classes, params.max_features, params.seed, t,
            params.max_depth, params.min_samples_leaf,
        )

    if params.n_jobs > 1:
        with ThreadPoolExecutor(params.n_jobs) as pool:
            trees = tuple(pool.map(grow, range(params.n_trees)))
    else:
        trees = tuple(grow(t) for t in range(params.n_trees))
    return RandomForestModel(trees, X.shape[1], n_classes, params)


def predict_forest(model: RandomForestModel, X) -> np.ndarray:
    """Majority vote over trees; ties go to the lowest class index."""
    return np.argmax(model.tree_votes(X), axis=1)
