"""Sequential forward selection around softmax regression, and the
accuracy-versus-k curve built on it."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from adexpert.datamodel import N_CLASSES, DataError, Dataset, split_indices, train_test_split
from adexpert.mlcore import scaler
from adexpert.mlcore.forest import ForestParams, fit_random_forest, predict_forest
from adexpert.mlcore.logistic import LogisticHyper, fit_softmax_batch, predict_batch
from adexpert.mlcore.metrics import accuracy


@dataclass(frozen=True)
class EvalProtocol:
    """Single stratified holdout carved from the training data."""

    holdout_fraction: float = 0.25
    seed: int = 0
    hyper: LogisticHyper = field(default_factory=LogisticHyper)


@dataclass(frozen=True)
class SfsResult:
    selected: tuple[int, ...]
    accuracy_trace: tuple[float, ...]
    k: int

    def to_dict(self) -> dict:
        return {"selected": list(self.selected), "accuracy_trace": list(self.accuracy_trace), "k": self.k}

    @classmethod
    def from_dict(cls, doc: dict) -> "SfsResult":
        return cls(tuple(doc["selected"]), tuple(doc["accuracy_trace"]), int(doc["k"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class CurvePoint:
    k: int
    accuracy: float


class _Holdout:
    """Inner train/validation split with columns standardized on the inner
    training part. Standardization is per column, so slicing columns out of
    these matrices equals standardizing the selected subset per fit."""

    def __init__(self, train: Dataset, protocol: EvalProtocol):
        fit_idx, val_idx = split_indices(train.labels, protocol.holdout_fraction, protocol.seed, stratified=True)
        params = scaler.fit_scaler(train.features[fit_idx])
        self.X_fit = scaler.transform(params, train.features[fit_idx])
        self.X_val = scaler.transform(params, train.features[val_idx])
        self.y_fit = train.labels[fit_idx]
        self.y_val = train.labels[val_idx]
        self.hyper = protocol.hyper

    def accuracies(self, subsets: Sequence[Sequence[int]]) -> np.ndarray:
        """Validation accuracy of a fresh model per column subset; all subsets
        must have the same size."""
        Xf = np.stack([self.X_fit[:, list(s)] for s in subsets])
        Xv = np.stack([self.X_val[:, list(s)] for s in subsets])
        W, b, _ = fit_softmax_batch(Xf, self.y_fit, N_CLASSES, self.hyper)
        pred = predict_batch(W, b, Xv)
        return (pred == self.y_val[None, :]).mean(axis=1)


def evaluate_subset(train: Dataset, features: Sequence[int], protocol: EvalProtocol | None = None) -> float:
    """Validation accuracy of ``features`` under ``protocol``, fitted alone."""
    return float(_Holdout(train, protocol or EvalProtocol()).accuracies([list(features)])[0])


def sfs_select(train: Dataset, k: int, protocol: EvalProtocol | None = None) -> SfsResult:
    protocol = protocol or EvalProtocol()
    p = train.n_features
    if not 1 <= k <= p:
        raise DataError(f"k must be in [1, {p}], got {k}")
    holdout = _Holdout(train, protocol)
    selected: list[int] = []
    trace: list[float] = []
    for _ in range(k):
        remaining = [j for j in range(p) if j not in selected]
        accs = holdout.accuracies([selected + [j] for j in remaining])
        best = int(np.argmax(accs))  # first maximum: lowest feature index wins ties
        selected.append(remaining[best])
        trace.append(float(accs[best]))
    return SfsResult(tuple(selected), tuple(trace), k)


def parse_k_range(text: str) -> list[int]:
    """``"1..20"``, ``"5"`` or ``"1,3,5"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(t) for t in text.split("..", 1))
            if lo > hi:
                raise DataError(f"empty k range {text!r}")
            return list(range(lo, hi + 1))
        return sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise DataError(f"bad k range {text!r}") from None


@dataclass(frozen=True)
class CurveConfig:
    test_fraction: float = 0.25
    seed: int = 0
    forest: ForestParams = field(default_factory=ForestParams)
    protocol: EvalProtocol | None = None


def accuracy_curve(ds: Dataset, k_values: Iterable[int], config: CurveConfig | None = None) -> list[CurvePoint]:
    """Test accuracy of a random forest on the first ``k`` SFS-selected
    features, for each ``k``.

    Greedy selection is prefix-consistent, so a single selection run up to
    ``max(k_values)`` yields every smaller selection as a prefix.
    """
    config = config or CurveConfig()
    ks = sorted(set(int(k) for k in k_values))
    if not ks:
        raise DataError("k_values must be nonempty")
    if ks[0] < 1 or ks[-1] > ds.n_features:
        raise DataError(f"every k must be in [1, {ds.n_features}]")
    train, test = train_test_split(ds, config.test_fraction, config.seed, stratified=True)
    protocol = config.protocol or EvalProtocol(seed=config.seed)
    sfs = sfs_select(train, ks[-1], protocol)
    params = scaler.fit_scaler(train.features)
    X_train = scaler.transform(params, train.features)
    X_test = scaler.transform(params, test.features)
    forest = ForestParams(**{**config.forest.to_dict(), "seed": config.seed}, n_jobs=config.forest.n_jobs)
    points = []
    for k in ks:
        cols = list(sfs.selected[:k])
        model = fit_random_forest(X_train[:, cols], train.labels, forest, n_classes=N_CLASSES)
        points.append(CurvePoint(k, accuracy(predict_forest(model, X_test[:, cols]), test.labels)))
    return points


def emit_curve_csv(points: Iterable[CurvePoint], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "accuracy"])
        for pt in sorted(points, key=lambda p: p.k):
            writer.writerow([pt.k, repr(float(pt.accuracy))])
