"""ROC analysis and bag-level fold splitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("threshold,fpr,tpr\n")
            for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
                fh.write("%r,%r,%r\n" % (float(t), float(f), float(p)))


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isin(labels, (-1, 1))):
        raise ValueError("labels must be -1/+1")
    pos = labels == 1
    if pos.all() or not pos.any():
        raise ValueError("undefined AUC: labels contain a single class")
    return scores, pos


def rank_auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counting one half."""
    scores, pos = _check_binary(scores, labels)
    n_pos, n_neg = pos.sum(), (~pos).sum()
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep from +inf down through every distinct score."""
    scores, pos = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(p)[last]
    fp = np.cumsum(~p)[last]
    fpr = np.r_[0.0, fp / (~pos).sum()]
    tpr = np.r_[0.0, tp / pos.sum()]
    return RocCurve(fpr, tpr, np.r_[np.inf, s[last]])


def roc_auc(scores, labels):
    """Returns ``(RocCurve, auc)`` with ``auc`` from the rank statistic."""
    return roc_curve(scores, labels), rank_auc(scores, labels)


def stratified_folds(labels, k: int = 4, seed: int = 0) -> np.ndarray:
    """Fold index (0..k-1) per item, stratified by label.

    Each class is shuffled with ``seed`` and dealt round-robin; the deal
    for each class starts where the previous class stopped so fold
    sizes stay balanced. Raises ``ValueError`` if some fold would miss
    a class.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=int)
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise ValueError("cannot stratify %d folds: class %r has only %d items"
                             % (k, cls, len(idx)))
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (np.arange(len(idx)) + offset) % k
        offset = (offset + len(idx)) % k
    return folds
