from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PCAModel:
    components: np.ndarray  # (k, n_features), orthonormal rows
    center: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {
            "components": self.components.tolist(),
            "center": self.center.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PCAModel":
        return cls(
            np.asarray(doc["components"], dtype=float).reshape(len(doc["components"]), -1),
            np.asarray(doc["center"], dtype=float),
            np.asarray(doc["explained_variance"], dtype=float),
        )


def fit_pca(X, k: int) -> PCAModel:
    """Top-``k`` principal axes of the population covariance of ``X``.

    Computed from the thin SVD of the centred data, whose right singular
    vectors are the covariance eigenvectors (eigenvalues ``s**2 / n``). Each
    axis is sign-fixed so its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if not 1 <= k <= min(n, p):
        raise ValueError(f"k must be in [1, {min(n, p)}], got {k}")
    center = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - center, full_matrices=False)
    comps = vt[:k].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), pivot])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    var = (s[:k] ** 2) / n
    return PCAModel(comps, center, var)


def project(model: PCAModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.center.shape[0]:
        raise ValueError(f"expected {model.center.shape[0]} features, got {X.shape[-1]}")
    return (X - model.center) @ model.components.T


def reconstruct(model: PCAModel, scores) -> np.ndarray:
    return np.asarray(scores, dtype=float) @ model.components + model.center
