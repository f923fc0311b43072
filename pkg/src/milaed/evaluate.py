"""Cross-validated bag/instance evaluation and temporal localization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .metrics import RocCurve, roc_auc, stratified_folds


def localize(scores, spans, threshold: float) -> list:
    """Merge spans whose score reaches ``threshold`` into sorted disjoint intervals."""
    scores = np.asarray(scores, dtype=np.float64)
    spans = np.asarray(spans, dtype=np.float64).reshape(-1, 2)
    if len(scores) != len(spans):
        raise ValueError("got %d scores for %d spans" % (len(scores), len(spans)))
    merged = []
    for s, e in sorted(map(tuple, spans[scores >= threshold])):
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(float(s), float(e)) for s, e in merged]


def localization_auc(instance_scores, instance_truths) -> float:
    """AUC over all instances pooled across bags."""
    scores = np.concatenate([np.atleast_1d(s) for s in instance_scores])
    truths = np.concatenate([np.atleast_1d(t) for t in instance_truths])
    return roc_auc(scores, truths)[1]


@dataclass
class FoldResult:
    bag_scores: np.ndarray
    bag_labels: np.ndarray
    folds: np.ndarray
    instance_scores: list
    bag_auc: float
    bag_roc: RocCurve
    instance_auc: float | None = None
    instance_roc: RocCurve | None = None
    fit_info: list = field(default_factory=list)


def kfold_evaluate(bags, learner_factory, k: int = 4, seed: int = 0, truths=None,
                   y=None) -> FoldResult:
    """Rotate ``k`` stratified bag folds as test sets and pool the held-out scores.

    ``learner_factory()`` must return an unfitted estimator exposing
    ``fit(bags, y)`` and ``instance_decision_function(bags)``. Bag
    scores are max-pooled instance scores. With ``truths`` (per-bag
    instance labels) the pooled instance-level AUC is reported too.
    """
    arrays = [np.asarray(getattr(b, "instances", b), dtype=np.float64) for b in bags]
    if y is None:
        y = np.array([b.label for b in bags])
    y = np.asarray(y)
    folds = stratified_folds(y, k, seed)
    inst_scores = [None] * len(arrays)
    fit_info = []
    for f in range(k):
        test = folds == f
        clf = learner_factory()
        clf.fit([a for a, t in zip(arrays, test) if not t], y[~test])
        held = clf.instance_decision_function([a for a, t in zip(arrays, test) if t])
        for i, s in zip(np.flatnonzero(test), held):
            inst_scores[i] = np.asarray(s, dtype=np.float64)
        fit_info.append({key: _plain(getattr(clf, key)) for key in
                         ("C_", "status_", "n_rounds_", "n_epochs_") if hasattr(clf, key)})
    bag_scores = np.array([s.max() for s in inst_scores])
    roc, auc = roc_auc(bag_scores, y)
    result = FoldResult(bag_scores, y, folds, inst_scores, auc, roc, fit_info=fit_info)
    if truths is not None:
        pooled = np.concatenate(truths)
        if (pooled == 1).any() and (pooled == -1).any():
            result.instance_roc, result.instance_auc = roc_auc(np.concatenate(inst_scores), pooled)
    return result


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class EventResult:
    event: str
    n_bags: int
    n_positive: int
    bag_auc: float
    instance_auc: float | None
    folds: dict
    fit_info: list


@dataclass
class EvalReport:
    events: dict
    config: dict

    @property
    def mean_bag_auc(self) -> float:
        return float(np.mean([r.bag_auc for r in self.events.values()]))

    @property
    def mean_instance_auc(self) -> float | None:
        vals = [r.instance_auc for r in self.events.values() if r.instance_auc is not None]
        return float(np.mean(vals)) if vals else None

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "events": {name: asdict(r) for name, r in self.events.items()},
            "mean_bag_auc": self.mean_bag_auc,
            "mean_instance_auc": self.mean_instance_auc,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        width = max([len("Event"), len("Mean")] + [len(e) for e in self.events])
        lines = ["%-*s  %8s  %8s  %10s" % (width, "Event", "Bags(+)", "Bag AUC", "Inst AUC")]
        for name, r in self.events.items():
            inst = "-" if r.instance_auc is None else "%.3f" % r.instance_auc
            lines.append("%-*s  %8s  %8.3f  %10s"
                         % (width, name, "%d(%d)" % (r.n_bags, r.n_positive), r.bag_auc, inst))
        mi = self.mean_instance_auc
        lines.append("%-*s  %8s  %8.3f  %10s" % (width, "Mean", "", self.mean_bag_auc,
                                                 "-" if mi is None else "%.3f" % mi))
        return "\n".join(lines)
