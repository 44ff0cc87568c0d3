"""Binary evaluation metrics: confusion matrix, AUROC, per-class F1, F1-macro.

Convention throughout: label 1 = anomalous = positive, label 0 = normal.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class F1Breakdown:
    per_class: tuple  # (normal class 0, anomalous class 1)
    f1_macro: float


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    auroc: float
    per_class: tuple
    f1_macro: float
    timings: dict = field(default_factory=dict)
    peak_model_bytes: int = 0

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.to_dict(),
            "auroc": self.auroc,
            "per_class": [c.to_dict() for c in self.per_class],
            "f1_macro": self.f1_macro,
            "timings": dict(self.timings),
            "peak_model_bytes": self.peak_model_bytes,
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _as_binary(values, name: str) -> np.ndarray:
    arr = np.asarray(list(values))
    if arr.size < 1:
        raise ValueError(f"{name} must be non-empty")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def confusion(labels, predictions) -> ConfusionMatrix:
    """Count TP/FP/FN/TN with anomaly (1) as the positive class."""
    y = _as_binary(labels, "labels")
    p = _as_binary(predictions, "predictions")
    if y.size != p.size:
        raise ValueError(f"length mismatch: {y.size} labels vs {p.size} predictions")
    return ConfusionMatrix(
        tp=int(((y == 1) & (p == 1)).sum()),
        fp=int(((y == 0) & (p == 1)).sum()),
        fn=int(((y == 1) & (p == 0)).sum()),
        tn=int(((y == 0) & (p == 0)).sum()),
    )


def auroc(labels, scores) -> float:
    """Rank-based AUROC (Mann-Whitney), counting tied pairs as half.

    Equals the probability that a random anomalous sample outscores a
    random normal one, and the trapezoidal area under the ROC curve.
    Raises UndefinedMetricError when only one class is present rather than
    returning a misleading sentinel.
    """
    y = _as_binary(labels, "labels")
    s = np.asarray(list(scores), dtype=np.float64)
    if y.size != s.size:
        raise ValueError(f"length mismatch: {y.size} labels vs {s.size} scores")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n_pos = int((y == 1).sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUROC is undefined with {n_pos} positives and {n_neg} negatives"
        )
    ranks = rankdata(s)  # average ranks on ties = 0.5 credit per tied pair
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1_macro(labels, predictions) -> F1Breakdown:
    """Per-class precision/recall/F1 and their unweighted two-class mean.

    A class with neither actual nor predicted members scores a vacuous 1.0;
    any other zero denominator scores 0.
    """
    y = _as_binary(labels, "labels")
    p = _as_binary(predictions, "predictions")
    if y.size != p.size:
        raise ValueError(f"length mismatch: {y.size} labels vs {p.size} predictions")
    per_class = []
    for cls in (0, 1):
        tp = int(((y == cls) & (p == cls)).sum())
        fp = int(((y != cls) & (p == cls)).sum())
        fn = int(((y == cls) & (p != cls)).sum())
        if tp + fp + fn == 0:
            per_class.append(ClassScores(1.0, 1.0, 1.0))
            continue
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_class.append(ClassScores(precision, recall, f1))
    macro = sum(c.f1 for c in per_class) / len(per_class)
    return F1Breakdown(per_class=tuple(per_class), f1_macro=macro)
