"""Degree-centrality features from ROI connectivity matrices."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from adexpert.datamodel import DataError, parse_number

SYMMETRY_TOL = 1e-9
DEFAULT_TAU = 0.3
MODES = ("absolute", "positive")


@dataclass(frozen=True)
class ConnectivityMatrix:
    values: np.ndarray
    roi_names: tuple[str, ...] | None = None

    def __post_init__(self):
        W = np.array(self.values, dtype=float, copy=True)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DataError(f"connectivity matrix must be square, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise DataError("connectivity matrix entries must be finite")
        if np.max(np.abs(W - W.T), initial=0.0) > SYMMETRY_TOL:
            raise DataError("connectivity matrix is not symmetric")
        off = ~np.eye(W.shape[0], dtype=bool)
        if np.any(np.abs(W[off]) > 1.0):
            raise DataError("correlation entries must lie in [-1, 1]")
        if self.roi_names is not None:
            names = tuple(self.roi_names)
            if len(names) != W.shape[0]:
                raise DataError(f"{len(names)} ROI names for {W.shape[0]} ROIs")
            object.__setattr__(self, "roi_names", names)
        W.flags.writeable = False
        object.__setattr__(self, "values", W)

    @property
    def n_rois(self) -> int:
        return self.values.shape[0]

    def feature_names(self) -> list[str]:
        if self.roi_names is not None:
            return list(self.roi_names)
        return [f"roi_{i}" for i in range(self.n_rois)]

    def permuted(self, perm: Sequence[int]) -> "ConnectivityMatrix":
        perm = np.asarray(perm)
        names = None if self.roi_names is None else tuple(self.roi_names[i] for i in perm)
        return ConnectivityMatrix(self.values[np.ix_(perm, perm)], names)


@dataclass(frozen=True)
class Adjacency:
    values: np.ndarray  # symmetric 0/1 matrix, zero diagonal
    threshold_used: float


def load_connectivity_matrix(path: str | Path) -> ConnectivityMatrix:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row_no, cells in enumerate(csv.reader(fh), start=1):
            if not cells:
                continue
            try:
                rows.append([parse_number(c) for c in cells])
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise DataError(f"{path}: ragged rows")
    if not rows or len(rows) != widths.pop():
        raise DataError(f"{path}: matrix is not square")
    return ConnectivityMatrix(np.array(rows))


def threshold_matrix(cm: ConnectivityMatrix, tau: float = DEFAULT_TAU, mode: str = "absolute") -> Adjacency:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if mode == "absolute":
        A = np.abs(cm.values) >= tau
    elif mode == "positive":
        A = cm.values >= tau
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    A = A.astype(np.int8)
    np.fill_diagonal(A, 0)
    return Adjacency(A, float(tau))


def degree_centrality(adj: Adjacency) -> np.ndarray:
    return adj.values.sum(axis=1).astype(float)


def weighted_degree(cm: ConnectivityMatrix, adj: Adjacency) -> np.ndarray:
    """Sum of ``|w|`` over each ROI's retained edges."""
    return (np.abs(cm.values) * adj.values).sum(axis=1)


def matrix_to_feature_row(
    cm: ConnectivityMatrix,
    tau: float = DEFAULT_TAU,
    mode: str = "absolute",
    weighted: bool = False,
) -> tuple[np.ndarray, list[str]]:
    """One feature per ROI (degree, or weighted degree) and its name."""
    adj = threshold_matrix(cm, tau, mode)
    row = weighted_degree(cm, adj) if weighted else degree_centrality(adj)
    return row, cm.feature_names()
