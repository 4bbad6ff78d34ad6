"""Binary-classification metrics: confusion counts, accuracy, precision,
F1, and rank-based ROC-AUC.

Positive class is 1 throughout. Prediction thresholding, where needed,
is score >= 0.5. Zero-denominator precision/recall are defined as 0 and
flagged in the assembled report rather than propagating NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred_labels, true_labels) -> ConfusionMatrix:
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape or pred.ndim != 1 or pred.shape[0] < 1:
        raise ValueError(f"prediction/label length mismatch: {pred.shape} vs {true.shape}")
    for name, arr in (("predictions", pred), ("labels", true)):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must be binary 0/1")
    return ConfusionMatrix(
        tp=int(((pred == 1) & (true == 1)).sum()),
        fp=int(((pred == 1) & (true == 0)).sum()),
        fn=int(((pred == 0) & (true == 1)).sum()),
        tn=int(((pred == 0) & (true == 0)).sum()),
    )


def classification_metrics(cm: ConfusionMatrix):
    """(accuracy, precision, f1); undefined ratios fall back to 0."""
    if cm.total < 1:
        raise ValueError("empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return accuracy, precision, f1


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their group's mean rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0])
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties
    counted half. Computed from the rank sum of the positives, which
    equals the pairwise statistic without enumerating pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores/labels length mismatch: {scores.shape} vs {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: both classes must be present")
    ranks = average_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def spearman(xs, ys) -> float:
    """Rank correlation; nan when either side is constant."""
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    sx = rx.std()
    sy = ry.std()
    if sx == 0.0 or sy == 0.0:
        return float("nan")
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    f1: float
    auc: float | None
    confusion: ConfusionMatrix
    n_items: int
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "f1": self.f1,
            "auc": self.auc,
            "confusion": {"tp": self.confusion.tp, "fp": self.confusion.fp,
                          "fn": self.confusion.fn, "tn": self.confusion.tn},
            "n_items": self.n_items,
            "notes": list(self.notes),
        }

    def csv_row(self) -> str:
        auc = "" if self.auc is None else repr(self.auc)
        return ",".join([repr(self.accuracy), repr(self.precision),
                         repr(self.f1), auc, str(self.n_items)])


def report_from_scores(scores, labels) -> MetricsReport:
    """Threshold scores at 0.5 and assemble the full report."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    preds = (scores >= 0.5).astype(np.int64)
    cm = confusion(preds, labels)
    accuracy, precision, f1 = classification_metrics(cm)
    notes = []
    if cm.tp + cm.fp == 0:
        notes.append("precision undefined (no positive predictions); reported as 0")
    if cm.tp + cm.fn == 0:
        notes.append("recall undefined (no positive labels); f1 reported as 0")
    try:
        auc = roc_auc(scores, labels)
    except ValueError:
        auc = None
        notes.append("auc undefined (single-class labels)")
    return MetricsReport(accuracy=accuracy, precision=precision, f1=f1, auc=auc,
                         confusion=cm, n_items=cm.total, notes=notes)
