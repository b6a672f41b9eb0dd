from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ScalerParams":
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["std"], dtype=float))


def fit_scaler(X) -> ScalerParams:
    """Population (1/n) standardization. Constant columns get std 1, so they
    transform to all zeros; so do columns whose spread underflows to 0."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("fit_scaler needs a 2-D matrix with at least one row")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[(np.ptp(X, axis=0) == 0) | ~(std > 0)] = 1.0
    return ScalerParams(mean, std)


def transform(params: ScalerParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != params.mean.shape[0]:
        raise ValueError(f"expected {params.mean.shape[0]} features, got {X.shape[-1]}")
    return (X - params.mean) / params.std


def fit_transform(X) -> tuple[ScalerParams, np.ndarray]:
    params = fit_scaler(X)
    return params, transform(params, X)
