"""Tabular gate: standardize, project to two principal components, score
with an isolation forest, flag decision values below a threshold."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from adexpert.anomaly.iforest import (
    IsolationForestModel,
    IsolationForestParams,
    anomaly_scores,
    fit_isolation_forest,
)
from adexpert.datamodel import DataError, Dataset
from adexpert.mlcore import scaler
from adexpert.mlcore.pca import PCAModel, fit_pca, project

DEFAULT_THRESHOLD = -0.3


@dataclass(frozen=True)
class GateConfig:
    features: tuple[str, ...] | None = None  # None selects every column
    n_components: int = 2
    threshold: float = DEFAULT_THRESHOLD
    forest: IsolationForestParams = field(default_factory=IsolationForestParams)


@dataclass(frozen=True)
class AnomalyReport:
    sample_index: int
    score: float
    flagged: bool
    feature_snapshot: tuple[float, ...]
    threshold: float = DEFAULT_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "sample_index": self.sample_index,
            "score": self.score,
            "flagged": self.flagged,
            "threshold": self.threshold,
            "feature_snapshot": list(self.feature_snapshot),
        }


@dataclass(frozen=True)
class TabularGate:
    columns: tuple[int, ...]
    scaler: scaler.ScalerParams
    pca: PCAModel
    forest: IsolationForestModel
    threshold: float
    n_features: int

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        Z = scaler.transform(self.scaler, X[:, list(self.columns)])
        return anomaly_scores(self.forest, project(self.pca, Z))

    def reports(self, X, start_index: int = 0) -> list[AnomalyReport]:
        X = np.asarray(X, dtype=float)
        scores = self.decision(X)
        return [
            AnomalyReport(
                start_index + i,
                float(s),
                bool(s < self.threshold),
                tuple(float(v) for v in row),
                self.threshold,
            )
            for i, (s, row) in enumerate(zip(scores, X))
        ]


def _columns(ds: Dataset, features: Sequence[str] | None) -> tuple[int, ...]:
    if features is None:
        return tuple(range(ds.n_features))
    missing = [f for f in features if f not in ds.feature_names]
    if missing:
        raise DataError(f"selected features not in dataset: {missing}")
    return tuple(ds.feature_names.index(f) for f in features)


def fit_tabular_gate(ds: Dataset, config: GateConfig | None = None) -> TabularGate:
    config = config or GateConfig()
    cols = _columns(ds, config.features)
    X = ds.features[:, list(cols)]
    params = scaler.fit_scaler(X)
    Z = scaler.transform(params, X)
    pca = fit_pca(Z, min(config.n_components, *Z.shape))
    forest = fit_isolation_forest(project(pca, Z), config.forest)
    return TabularGate(cols, params, pca, forest, config.threshold, ds.n_features)


def detect_tabular(ds: Dataset, config: GateConfig | None = None) -> list[AnomalyReport]:
    """Fit the gate on ``ds`` and report on every sample of ``ds``."""
    gate = fit_tabular_gate(ds, config)
    return gate.reports(ds.features)
