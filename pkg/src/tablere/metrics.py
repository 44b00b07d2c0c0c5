"""Accuracy, F1 variants and confusion-matrix reporting.

Confusion matrices are indexed ``[predicted, true]``: rows are predicted
labels, columns are true labels.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    micro_f1: float
    weighted_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray
    absent: list = field(default_factory=list)  # classes with zero support, F1 forced to 0

    def summary(self):
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "weighted_f1": self.weighted_f1,
        }


def confusion_matrix(predicted, true, n_classes):
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (np.asarray(predicted, dtype=np.int64), np.asarray(true, dtype=np.int64)), 1)
    return conf


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def metrics_from_confusion(conf):
    conf = np.asarray(conf, dtype=np.int64)
    total = conf.sum()
    tp = np.diag(conf).astype(np.float64)
    predicted = conf.sum(axis=1)
    support = conf.sum(axis=0)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    absent = [int(c) for c in np.flatnonzero(support == 0)]
    f1[absent] = 0.0
    accuracy = float(tp.sum() / total) if total else 0.0
    # single-label multiclass: micro P = micro R = accuracy
    micro_p = float(tp.sum() / predicted.sum()) if predicted.sum() else 0.0
    micro_r = float(tp.sum() / support.sum()) if support.sum() else 0.0
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    return Metrics(
        accuracy=accuracy,
        macro_f1=float(f1.mean()),
        micro_f1=float(micro_f1),
        weighted_f1=float((f1 * support).sum() / total) if total else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        confusion=conf,
        absent=absent,
    )


def compute_metrics(predicted, true, n_classes):
    return metrics_from_confusion(confusion_matrix(predicted, true, n_classes))


def difficult_relations(conf, k=10):
    """Top-``k`` off-diagonal ``(predicted, true, rate)`` cells.

    ``rate`` is the cell divided by its true-label column total. Ties are
    broken by ``(predicted, true)`` index order; zero rates are dropped.
    """
    conf = np.asarray(conf, dtype=np.float64)
    col = conf.sum(axis=0)
    rates = _safe_div(conf, np.broadcast_to(col, conf.shape))
    cells = [
        (int(p), int(t), float(rates[p, t]))
        for p in range(conf.shape[0])
        for t in range(conf.shape[1])
        if p != t and rates[p, t] > 0
    ]
    cells.sort(key=lambda c: (-c[2], c[0], c[1]))
    return cells[:k]


def write_confusion_csv(path, conf):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(np.asarray(conf, dtype=np.int64).tolist())


def read_confusion_csv(path):
    with open(path, newline="") as fh:
        return np.array([[int(v) for v in row] for row in csv.reader(fh)], dtype=np.int64)


def write_pgm(path, conf):
    """8-bit binary PGM heatmap, each row scaled by its sum."""
    conf = np.asarray(conf, dtype=np.float64)
    rows = conf.sum(axis=1, keepdims=True)
    norm = _safe_div(conf, np.broadcast_to(rows, conf.shape))
    pixels = np.rint(norm * 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
