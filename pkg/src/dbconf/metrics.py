"""Classification metrics: accuracy, F1, BCA, and tie-safe AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    """A metric's denominator is empty; raised instead of returning 0."""


def confusion(preds, labels, positive_class=1):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(
            f"preds/labels length mismatch: {preds.shape} vs {labels.shape}")
    pos_p = preds == positive_class
    pos_l = labels == positive_class
    tp = int(np.sum(pos_p & pos_l))
    tn = int(np.sum(~pos_p & ~pos_l))
    fp = int(np.sum(pos_p & ~pos_l))
    fn = int(np.sum(~pos_p & pos_l))
    return tp, tn, fp, fn


def accuracy(counts) -> float:
    tp, tn, fp, fn = counts
    total = tp + tn + fp + fn
    if total == 0:
        raise UndefinedMetricError("accuracy undefined on an empty evaluation")
    return 100.0 * (tp + tn) / total


def f1(counts) -> float:
    tp, tn, fp, fn = counts
    denom = 2 * tp + fp + fn
    if denom == 0:
        raise UndefinedMetricError(
            "F1 undefined: no positive trials predicted or present")
    return 100.0 * 2 * tp / denom


def bca(counts) -> float:
    tp, tn, fp, fn = counts
    if tp + fn == 0 or tn + fp == 0:
        raise UndefinedMetricError(
            "balanced accuracy undefined: a class is absent")
    sens = tp / (tp + fn)
    spec = tn / (tn + fp)
    return 100.0 * (sens + spec) / 2.0


def auc(scores, labels, positive_class=1) -> float:
    """Mann-Whitney AUC over positive-class scores; ties count half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == positive_class
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: only one class present")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class MetricsReport:
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    f1: float | None = None
    bca: float | None = None
    auc: float | None = None

    @property
    def n_trials(self):
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def evaluate(preds, labels, scores=None, positive_class=1,
             full=True) -> MetricsReport:
    """Confusion counts plus the derived metrics.

    F1/BCA/AUC are skipped silently only when `full` is false (accuracy-only
    reporting); with `full`, an undefined metric raises.
    """
    counts = confusion(preds, labels, positive_class)
    rep = MetricsReport(*counts, accuracy=accuracy(counts))
    if full:
        rep.f1 = f1(counts)
        rep.bca = bca(counts)
        if scores is not None:
            rep.auc = 100.0 * auc(scores, labels, positive_class)
    return rep
