"""Multinomial (softmax) logistic regression trained by full-batch gradient
descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LogisticHyper:
    learning_rate: float = 0.1
    iterations: int = 500
    l2: float = 1e-4


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray  # (n_classes,)
    hyper: LogisticHyper = field(default_factory=LogisticHyper)
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0), compare=False)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights.T + self.bias


def fit_softmax_batch(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    hyper: LogisticHyper,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit ``B`` independent models at once.

    ``X`` has shape ``(B, n, d)``; all models share the labels ``y``.
    Returns weights ``(B, C, d)``, bias ``(B, C)`` and the objective trace
    ``(B, iterations + 1)`` (mean cross-entropy plus ``l2/2 * ||W||^2``).

    With standardized inputs the objective is ``L``-smooth with
    ``L <= (d + 1) / 2 + l2``, so the default step of 0.1 decreases it
    monotonically for ``d`` up to about 38.
    """
    B, n, d = X.shape
    # classes-first layout keeps the softmax reductions over a short outer axis
    XT = np.ascontiguousarray(np.swapaxes(X, 1, 2))  # (B, d, n)
    rows = np.arange(n)
    Y = np.zeros((n_classes, n))
    Y[y, rows] = 1.0
    W = np.zeros((B, n_classes, d))
    b = np.zeros((B, n_classes, 1))
    lr, l2 = hyper.learning_rate, hyper.l2
    trace = np.empty((B, hyper.iterations + 1))
    for it in range(hyper.iterations + 1):
        Z = W @ XT
        Z += b
        Z -= Z.max(axis=1, keepdims=True)
        P = np.exp(Z)
        S = P.sum(axis=1, keepdims=True)
        true_logp = Z[:, y, rows] - np.log(S[:, 0, :])
        trace[:, it] = -true_logp.sum(axis=1) / n + 0.5 * l2 * (W * W).sum(axis=(1, 2))
        if it == hyper.iterations:
            break
        P /= S
        P -= Y  # n times the gradient of the cross-entropy w.r.t. the logits
        P /= n
        W = W - lr * (P @ X + l2 * W)
        b = b - lr * P.sum(axis=2, keepdims=True)
    return W, b[:, :, 0], trace


def fit_logistic(X, y, hyper: LogisticHyper | None = None, n_classes: int | None = None) -> LogisticModel:
    hyper = hyper or LogisticHyper()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n_samples, n_features) with one label per row")
    if np.unique(y).size < 2:
        raise ValueError("logistic regression needs at least 2 classes in y")
    n_classes = n_classes or int(y.max()) + 1
    W, b, trace = fit_softmax_batch(X[None], y, n_classes, hyper)
    return LogisticModel(W[0].copy(), b[0].copy(), hyper, trace[0])


def predict_logistic(model: LogisticModel, X) -> np.ndarray:
    # argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(model.decision(X), axis=1)


def predict_batch(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Predictions of ``B`` models (weights ``(B, C, d)``) on their own
    inputs ``X (B, m, d)``."""
    return np.argmax(X @ np.swapaxes(W, 1, 2) + b[:, None, :], axis=2)
