"""L2-regularized hinge-loss linear SVM solved by dual coordinate descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    c: float
    metadata: dict = field(default_factory=dict)

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.w.shape[0]:
            raise ValueError("dimension mismatch: model has %d weights, input has %d features"
                             % (self.w.shape[0], X.shape[-1]))
        return X @ self.w + self.b


_CHECK_EVERY = 10


def decision(model: LinearModel, x):
    """``<w, x> + b`` for a vector (returns a float) or a matrix of rows."""
    out = model.decision(x)
    return float(out) if np.ndim(out) == 0 else out


@numba.njit(cache=True)
def _gap(X, y, C, w, alpha):
    wn = np.dot(w, w)
    hinge = 0.0
    for i in range(X.shape[0]):
        m = 1.0 - y[i] * np.dot(w, X[i])
        if m > 0.0:
            hinge += m
    primal = 0.5 * wn + C * hinge
    return primal, primal + 0.5 * wn - alpha.sum()


@numba.njit(cache=True)
def _dual_cd(X, y, C, max_epochs, tol, seed, check_every, w, alpha, dual_history):
    # dual coordinate descent with shrinking; the stopping test is the
    # relative duality gap over all examples
    n, d = X.shape
    np.random.seed(seed)
    qii = np.empty(n)
    for i in range(n):
        qii[i] = np.dot(X[i], X[i])
    index = np.arange(n)
    active = n
    pg_max_old, pg_min_old = np.inf, -np.inf
    for epoch in range(max_epochs):
        np.random.shuffle(index[:active])
        pg_max, pg_min = -np.inf, np.inf
        s = 0
        while s < active:
            i = index[s]
            g = y[i] * np.dot(w, X[i]) - 1.0
            pg = 0.0
            if alpha[i] == 0.0:
                if g > pg_max_old:
                    active -= 1
                    index[s], index[active] = index[active], index[s]
                    continue
                if g < 0.0:
                    pg = g
            elif alpha[i] == C:
                if g < pg_min_old:
                    active -= 1
                    index[s], index[active] = index[active], index[s]
                    continue
                if g > 0.0:
                    pg = g
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if abs(pg) > 1e-12:
                new = min(max(alpha[i] - g / qii[i], 0.0), C)
                step = (new - alpha[i]) * y[i]
                for j in range(d):
                    w[j] += step * X[i, j]
                alpha[i] = new
            s += 1
        dual_history[epoch] = 0.5 * np.dot(w, w) - alpha.sum()
        settled = pg_max - pg_min <= 1e-12
        if settled or (epoch + 1) % check_every == 0 or epoch + 1 == max_epochs:
            primal, gap = _gap(X, y, C, w, alpha)
            if gap <= tol * max(1.0, abs(primal)):
                return epoch + 1
            if settled or active < n:
                # re-examine every example on the next pass
                active = n
                pg_max_old, pg_min_old = np.inf, -np.inf
                continue
        pg_max_old = pg_max if pg_max > 0.0 else np.inf
        pg_min_old = pg_min if pg_min < 0.0 else -np.inf
    return max_epochs


def primal_objective(w, b, X, y, C) -> float:
    """``0.5 * (|w|^2 + b^2) + C * sum(hinge)``, the problem the solver minimizes."""
    margins = y * (X @ w + b)
    return 0.5 * (w @ w + b * b) + C * np.maximum(0.0, 1.0 - margins).sum()


def train_linear_svm(X, y, C: float = 1.0, tol: float = 1e-3, max_epochs: int = 1000,
                     seed: int = 0, alpha0=None) -> LinearModel:
    """Fit ``w, b`` on labels in {-1, +1}.

    The bias is learned as the weight of an appended constant feature,
    so it is regularized together with ``w``. Stops when the relative
    duality gap drops below ``tol`` or after ``max_epochs``. ``alpha0``
    warm-starts the dual variables (clipped to [0, C]).
    """
    X, y = check_X_y(X, y, dtype=np.float64)
    y = y.astype(np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1/+1")
    if (y > 0).all() or (y < 0).all():
        raise ValueError("degenerate labels: need at least one example of each class")
    if C <= 0:
        raise ValueError("C must be positive")
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    if alpha0 is None:
        alpha = np.zeros(Xa.shape[0])
    else:
        alpha = np.clip(np.asarray(alpha0, dtype=np.float64), 0.0, C)
    w = Xa.T @ (alpha * y)
    history = np.full(max_epochs, np.nan)
    epochs = _dual_cd(Xa, y, float(C), int(max_epochs), float(tol), int(seed) % (2**32),
                      _CHECK_EVERY, w, alpha, history)
    model = LinearModel(w[:-1].copy(), float(w[-1]), float(C))
    model.metadata = {
        "epochs": int(epochs),
        "converged": bool(_gap(Xa, y, float(C), w, alpha)[1]
                          <= tol * max(1.0, abs(_gap(Xa, y, float(C), w, alpha)[0]))),
        "dual_objective": history[:epochs].tolist(),
        "primal_objective": float(primal_objective(model.w, model.b, X, y, C)),
        "alpha": alpha,
    }
    return model


class LinearSVM(ClassifierMixin, BaseEstimator):
    """scikit-learn front end for :func:`train_linear_svm`."""

    def __init__(self, C=1.0, tol=1e-3, max_epochs=1000, seed=0):
        self.C = C
        self.tol = tol
        self.max_epochs = max_epochs
        self.seed = seed

    def fit(self, X, y):
        self.model_ = train_linear_svm(X, y, self.C, self.tol, self.max_epochs, self.seed)
        self.coef_ = self.model_.w
        self.intercept_ = self.model_.b
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = self.coef_.shape[0]
        self.n_iter_ = self.model_.metadata["epochs"]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision(check_array(X))

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)
