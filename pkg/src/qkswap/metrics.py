"""Detection metrics with spoof as the positive class.

Scores are oriented so that larger means "more likely spoof"; labels are 1
for spoof and 0 for bona fide. A trial is flagged as spoof when its score is
strictly above the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / (self.tp + self.fp + self.tn + self.fn)

    @property
    def precision(self) -> float:
        predicted = self.tp + self.fp
        return self.tp / predicted if predicted else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn)

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "fpr": self.fpr}


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be 1-D and of equal length")
    if not np.all(np.isin(labels, (0, 1))):
        raise DataError("labels must be 1 (spoof) or 0 (bona fide)")
    if labels.all() or not labels.any():
        raise DataError("both spoof and bona fide trials are required")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")
    return scores, labels.astype(bool)


def confusion(scores, labels, threshold: float = 0.0) -> Confusion:
    scores, spoof = _check(scores, labels)
    flagged = scores > threshold
    return Confusion(tp=int(np.sum(flagged & spoof)), fp=int(np.sum(flagged & ~spoof)),
                     tn=int(np.sum(~flagged & ~spoof)), fn=int(np.sum(~flagged & spoof)))


def confusion_metrics(scores, labels, threshold: float = 0.0) -> dict:
    """accuracy, precision, recall, f1 and fpr at ``threshold``."""
    return confusion(scores, labels, threshold).as_dict()


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # ascending, from -inf to +inf
    fpr: np.ndarray
    tpr: np.ndarray

    @property
    def fnr(self) -> np.ndarray:
        return 1.0 - self.tpr

    @property
    def det(self) -> tuple[np.ndarray, np.ndarray]:
        return self.fpr, self.fnr


def roc_curve(scores, labels) -> RocCurve:
    """Operating points at -inf, every midpoint between distinct scores, and +inf."""
    scores, spoof = _check(scores, labels)
    uniq = np.unique(scores)
    thresholds = np.concatenate([[-np.inf], (uniq[:-1] + uniq[1:]) / 2, [np.inf]])
    pos = np.sort(scores[spoof])
    neg = np.sort(scores[~spoof])
    missed = np.searchsorted(pos, thresholds, side="right")
    false_alarms = neg.size - np.searchsorted(neg, thresholds, side="right")
    return RocCurve(thresholds, false_alarms / neg.size, 1.0 - missed / pos.size)


def eer_from_curve(curve: RocCurve) -> float:
    fpr, fnr = curve.fpr, curve.fnr
    d = fpr - fnr
    # d falls from +1 at -inf to -1 at +inf; interpolate across the sign change
    k = int(np.flatnonzero(d > 0)[-1])
    s = d[k] / (d[k] - d[k + 1])
    return float(fpr[k] + s * (fpr[k + 1] - fpr[k]))


def roc_and_eer(scores, labels) -> tuple[RocCurve, float]:
    curve = roc_curve(scores, labels)
    return curve, eer_from_curve(curve)


def eer(scores, labels) -> float:
    return roc_and_eer(scores, labels)[1]
