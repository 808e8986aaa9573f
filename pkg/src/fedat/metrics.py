"""Confusion matrices and macro / weighted precision, recall and F-score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedat.errors import DimensionError, InvalidLabelError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, cols = predicted class

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(y_true, y_pred, num_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"y_true has {y_true.shape}, y_pred has {y_pred.shape}")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise InvalidLabelError(f"labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def per_class_prf(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall, F; a zero denominator scores 0."""
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    p = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    r = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    s = p + r
    f = np.divide(2 * p * r, s, out=np.zeros_like(tp), where=s > 0)
    return p, r, f


def macro_prf(cm: ConfusionMatrix, average: str = "macro") -> tuple[float, float, float]:
    """Average the per-class scores over classes that occur in ``y_true``.

    ``average="macro"`` weights those classes equally; ``"weighted"`` weights
    them by support. F is the average of per-class F, not F of the averages.
    """
    if cm.total == 0:
        raise ValueError("metrics are undefined for an empty confusion matrix")
    p, r, f = per_class_prf(cm)
    support = cm.counts.sum(axis=1)
    present = support > 0
    if average == "macro":
        k = present.sum()
        return float(p[present].sum() / k), float(r[present].sum() / k), float(f[present].sum() / k)
    if average == "weighted":
        w = support / support.sum()
        return float(w @ p), float(w @ r), float(w @ f)
    raise ValueError(f"unknown averaging scheme {average!r}")
