from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion_matrix: np.ndarray  # rows: truth, columns: prediction
    absent_classes: tuple[int, ...] = ()

    @property
    def n_samples(self) -> int:
        return int(self.confusion_matrix.sum())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion_matrix": self.confusion_matrix.tolist(),
            "absent_classes": list(self.absent_classes),
        }


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def evaluate(predictions, truth, n_classes: int | None = None) -> Metrics:
    """Confusion-matrix metrics. Precision/recall/F1 with a zero denominator
    are reported as 0; classes absent from both vectors are listed in
    ``absent_classes``."""
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {true.size} labels")
    if n_classes is None:
        n_classes = int(max(pred.max(initial=-1), true.max(initial=-1))) + 1
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    tp = np.diag(cm).astype(float)
    precision = _safe_ratio(tp, cm.sum(axis=0).astype(float))
    recall = _safe_ratio(tp, cm.sum(axis=1).astype(float))
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    total = cm.sum()
    absent = tuple(int(c) for c in range(n_classes) if cm[c, :].sum() == 0 and cm[:, c].sum() == 0)
    return Metrics(
        accuracy=float(tp.sum() / total) if total else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        confusion_matrix=cm,
        absent_classes=absent,
    )


def accuracy(predictions, truth) -> float:
    pred = np.asarray(predictions)
    true = np.asarray(truth)
    if pred.shape != true.shape:
        raise ValueError("length mismatch")
    return float(np.mean(pred == true)) if pred.size else 0.0
