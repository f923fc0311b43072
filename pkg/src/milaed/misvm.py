"""mi-SVM: alternate linear SVM training and instance label imputation."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .metrics import rank_auc, stratified_folds
from .svm import LinearModel, train_linear_svm

logger = logging.getLogger(__name__)

DEFAULT_C_GRID = tuple(2.0 ** k for k in range(-5, 6, 2))


def as_bag_arrays(bags) -> list:
    """Accept :class:`~milaed.bags.Bag` objects or array-likes; return 2-D float arrays."""
    out = []
    for bag in bags:
        arr = np.atleast_2d(np.asarray(getattr(bag, "instances", bag), dtype=np.float64))
        if arr.shape[0] == 0:
            raise ValueError("empty bag")
        out.append(arr)
    if len({a.shape[1] for a in out}) > 1:
        raise ValueError("bags have inconsistent feature dimensions")
    return out


def bag_labels_of(bags, y=None) -> np.ndarray:
    if y is None:
        y = [bag.label for bag in bags]
    y = np.asarray(y).ravel()
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("bag labels must be -1/+1")
    return y.astype(int)


def impute_labels(scores, bag_of_instance, bag_labels) -> np.ndarray:
    """One imputation pass.

    Instances of negative bags stay -1. In positive bags each instance
    takes ``sign(f)`` with ``sign(0) = +1``; a positive bag left with no
    positive instance gets its highest-scoring instance (first on ties)
    set to +1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    bag_of_instance = np.asarray(bag_of_instance)
    pos_bag = np.asarray(bag_labels)[bag_of_instance] == 1
    labels = np.where(pos_bag & (scores >= 0), 1, -1)
    for i in np.flatnonzero(np.asarray(bag_labels) == 1):
        idx = np.flatnonzero(bag_of_instance == i)
        if not (labels[idx] == 1).any():
            labels[idx[np.argmax(scores[idx])]] = 1
    return labels


@dataclass
class MiSvmResult:
    model: LinearModel
    labels: list
    status: str
    rounds: int
    objective: list


def _digest(labels) -> str:
    return hashlib.sha1(np.ascontiguousarray(labels, dtype=np.int8).tobytes()).hexdigest()


def mi_svm_train(bags, y=None, C: float = 1.0, max_rounds: int = 50, tol: float = 1e-3,
                 max_epochs: int = 1000, seed: int = 0) -> MiSvmResult:
    """Run the mi-SVM heuristic on training bags.

    ``status`` is ``"converged"`` when the imputed labels stop changing,
    ``"cycle"`` when a label configuration repeats, and ``"round-limit"``
    after ``max_rounds``. On cycles and round limits the round with the
    lowest SVM objective is returned.
    """
    arrays = as_bag_arrays(bags)
    y = bag_labels_of(bags, y)
    if not (y == 1).any():
        raise ValueError("mi-SVM needs at least one positive bag")
    if not (y == -1).any():
        raise ValueError("mi-SVM needs at least one negative bag")
    X = np.vstack(arrays)
    owner = np.repeat(np.arange(len(arrays)), [len(a) for a in arrays])
    labels = y[owner].copy()
    seen = {_digest(labels)}
    rounds, objective = [], []
    status = "round-limit"
    alpha = None
    for r in range(1, max_rounds + 1):
        model = train_linear_svm(X, labels, C, tol=tol, max_epochs=max_epochs, seed=seed,
                                 alpha0=alpha)
        alpha = model.metadata["alpha"]
        rounds.append((model, labels))
        objective.append(model.metadata["primal_objective"])
        new = impute_labels(model.decision(X), owner, y)
        changed = int((new != labels).sum())
        logger.debug("mi-SVM round %d: objective %.6g, %d labels changed", r, objective[-1], changed)
        if changed == 0:
            status = "converged"
            break
        key = _digest(new)
        if key in seen:
            status = "cycle"
            break
        seen.add(key)
        labels = new
    if status == "converged":
        model, labels = rounds[-1]
    else:
        model, labels = rounds[int(np.argmin(objective))]
        logger.info("mi-SVM stopped on %s after %d rounds", status, len(rounds))
    model.metadata.update(rounds=len(rounds), status=status)
    splits = np.cumsum([len(a) for a in arrays])[:-1]
    return MiSvmResult(model, np.split(labels, splits), status, len(rounds), objective)


class _Standardizer:
    """Per-dimension standardization fitted on training instances."""

    def fit_stats(self, X):
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)

    def _scale(self, X):
        if getattr(self, "mean_", None) is None:
            return X
        return (X - self.mean_) / self.scale_


class MISVM(ClassifierMixin, BaseEstimator, _Standardizer):
    """Bag classifier trained with mi-SVM.

    ``fit(bags, y)`` takes a sequence of (n_i, d) instance arrays (or
    :class:`~milaed.bags.Bag` objects) and -1/+1 bag labels. With
    ``C="auto"`` the trade-off is chosen by bag-level cross-validation
    over ``c_grid``. Bag scores are the maximum instance decision value.
    """

    def __init__(self, C=1.0, c_grid=None, cv_folds=4, max_rounds=50, standardize=True,
                 tol=1e-3, max_epochs=1000, seed=0):
        self.C = C
        self.c_grid = c_grid
        self.cv_folds = cv_folds
        self.max_rounds = max_rounds
        self.standardize = standardize
        self.tol = tol
        self.max_epochs = max_epochs
        self.seed = seed

    def fit(self, bags, y=None):
        arrays = as_bag_arrays(bags)
        y = bag_labels_of(bags, y)
        if self.C == "auto":
            grid = DEFAULT_C_GRID if self.c_grid is None else self.c_grid
            self.cv_scores_ = {}
            self.C_ = select_c(arrays, y, grid, folds=self.cv_folds, seed=self.seed,
                               scores_out=self.cv_scores_, **self._inner_params())
            logger.info("selected C=%g", self.C_)
        else:
            self.C_ = float(self.C)
        self.mean_ = self.scale_ = None
        if self.standardize:
            self.fit_stats(np.vstack(arrays))
        result = mi_svm_train([self._scale(a) for a in arrays], y, self.C_,
                              max_rounds=self.max_rounds, tol=self.tol,
                              max_epochs=self.max_epochs, seed=self.seed)
        self.model_ = result.model
        self.imputed_labels_ = result.labels
        self.status_ = result.status
        self.n_rounds_ = result.rounds
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = arrays[0].shape[1]
        return self

    def _inner_params(self):
        return dict(max_rounds=self.max_rounds, standardize=self.standardize, tol=self.tol,
                    max_epochs=self.max_epochs)

    def instance_decision_function(self, bags) -> list:
        check_is_fitted(self, "model_")
        return [self.model_.decision(self._scale(a)) for a in as_bag_arrays(bags)]

    def decision_function(self, bags) -> np.ndarray:
        return np.array([s.max() for s in self.instance_decision_function(bags)])

    def predict(self, bags):
        return np.where(self.decision_function(bags) >= 0, 1, -1)


def select_c(bags, y=None, grid=DEFAULT_C_GRID, folds: int = 4, seed: int = 0,
             scores_out: dict | None = None, **params) -> float:
    """Pick C maximizing mean held-out bag AUC over stratified bag folds.

    Ties go to the smaller C. ``params`` are forwarded to :class:`MISVM`.
    """
    arrays = as_bag_arrays(bags)
    y = bag_labels_of(bags, y)
    grid = sorted({float(c) for c in grid})
    if not grid:
        raise ValueError("empty C grid")
    if len(grid) == 1:
        return grid[0]
    assignment = stratified_folds(y, folds, seed)
    best_c, best = None, -np.inf
    for c in grid:
        aucs = []
        for k in range(folds):
            test = assignment == k
            clf = MISVM(C=c, seed=seed, **params)
            clf.fit([a for a, t in zip(arrays, test) if not t], y[~test])
            aucs.append(rank_auc(clf.decision_function([a for a, t in zip(arrays, test) if t]),
                                 y[test]))
        mean = float(np.mean(aucs))
        if scores_out is not None:
            scores_out[c] = mean
        if mean > best:
            best_c, best = c, mean
    return best_c
