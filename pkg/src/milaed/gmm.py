"""Universal background GMM and the soft-count / MAP-mean segment features."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.cluster import kmeans_plusplus
from sklearn.utils.validation import check_array, check_is_fitted

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
DEFAULT_RELEVANCE = 16.0
MIN_OCCUPANCY = 1e-8
_CHUNK = 65536


@dataclass(frozen=True)
class Gmm:
    """Diagonal-covariance Gaussian mixture. Treated as immutable."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def weighted_log_densities(self, X) -> np.ndarray:
        """``log w_k + log N(x_t; mu_k, var_k)`` for every row, shape (T, G)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError("expected %d features, got %d" % (self.n_features, X.shape[1]))
        prec = 1.0 / self.variances
        const = (np.log(self.weights)
                 - 0.5 * (self.n_features * LOG_2PI + np.log(self.variances).sum(axis=1))
                 - 0.5 * np.sum(self.means ** 2 * prec, axis=1))
        out = np.empty((X.shape[0], self.n_components))
        mp = (self.means * prec).T
        for start in range(0, X.shape[0], _CHUNK):
            x = X[start:start + _CHUNK]
            out[start:start + _CHUNK] = const - 0.5 * (x ** 2) @ prec.T + x @ mp
        return out

    def log_posteriors(self, X) -> np.ndarray:
        lw = self.weighted_log_densities(X)
        return lw - logsumexp(lw, axis=1, keepdims=True)

    def posteriors(self, X) -> np.ndarray:
        return np.exp(self.log_posteriors(X))

    def score(self, X) -> float:
        """Average per-frame log-likelihood."""
        return float(np.mean(logsumexp(self.weighted_log_densities(X), axis=1)))


def train_ubm(frames, n_components: int, seed: int = 0, max_iter: int = 100,
              tol: float = 1e-6, max_frames: int = 500_000, var_floor_ratio: float = 1e-4,
              weight_floor: float = 1e-8):
    """Fit a diagonal GMM by EM from a k-means++ start.

    Returns ``(gmm, history)`` where ``history`` lists the average
    log-likelihood of every parameter set visited, ending with the
    returned model's.
    """
    X = check_array(frames, dtype=np.float64)
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if X.shape[0] < 10 * n_components:
        raise ValueError("too few frames for %d components: got %d, need at least %d"
                         % (n_components, X.shape[0], 10 * n_components))
    rng = np.random.default_rng(seed)
    if X.shape[0] > max_frames:
        X = X[np.sort(rng.choice(X.shape[0], size=max_frames, replace=False))]

    var_floor = var_floor_ratio * X.var(axis=0)
    var_floor = np.maximum(var_floor, np.finfo(np.float64).tiny)

    centers, _ = kmeans_plusplus(X, n_components, random_state=int(rng.integers(2**31 - 1)))
    d2 = (X ** 2).sum(1)[:, None] - 2 * X @ centers.T + (centers ** 2).sum(1)[None, :]
    resp = np.zeros((X.shape[0], n_components))
    resp[np.arange(X.shape[0]), np.argmin(d2, axis=1)] = 1.0
    gmm = _m_step(X, resp, var_floor, weight_floor)

    history = []
    for it in range(max_iter):
        lw = gmm.weighted_log_densities(X)
        ll = logsumexp(lw, axis=1)
        history.append(float(ll.mean()))
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break
        gmm = _m_step(X, np.exp(lw - ll[:, None]), var_floor, weight_floor)
    else:
        history.append(gmm.score(X))
    logger.info("UBM G=%d fitted in %d iterations, avg log-likelihood %.4f",
                n_components, len(history), history[-1])
    return gmm, history


def _m_step(X, resp, var_floor, weight_floor) -> Gmm:
    nk = resp.sum(axis=0)
    safe = np.maximum(nk, np.finfo(np.float64).tiny)
    means = (resp.T @ X) / safe[:, None]
    variances = (resp.T @ (X ** 2)) / safe[:, None] - means ** 2
    variances = np.maximum(variances, var_floor[None, :])
    weights = np.maximum(nk / X.shape[0], weight_floor)
    weights /= weights.sum()
    return Gmm(weights, means, variances)


def posterior(gmm: Gmm, x) -> np.ndarray:
    """Component responsibilities of a single frame ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("posterior expects one finite D-vector")
    return gmm.posteriors(x[None, :])[0]


def _frames(segment) -> np.ndarray:
    X = getattr(segment, "vectors", segment)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty segment")
    return X


def f_features(gmm: Gmm, segment) -> np.ndarray:
    """Normalized soft-count histogram of ``segment`` over the mixture components."""
    return gmm.posteriors(_frames(segment)).mean(axis=0)


def map_adapt_means(gmm: Gmm, segment, r: float = DEFAULT_RELEVANCE) -> np.ndarray:
    """MAP-adapted component means, flattened component by component (length G*D)."""
    X = _frames(segment)
    return adapted_means_from_stats(gmm, *sufficient_stats(gmm.posteriors(X), X), r)


def sufficient_stats(post, X):
    """Zeroth- and first-order statistics ``(n_k, sum_t Pr(k|x_t) x_t)``."""
    return post.sum(axis=0), post.T @ X


def adapted_means_from_stats(gmm: Gmm, n, first_order, r: float) -> np.ndarray:
    if r < 0:
        raise ValueError("relevance factor must be >= 0, got %r" % r)
    out = gmm.means.copy()
    ok = n >= MIN_OCCUPANCY
    nk = n[ok][:, None]
    expected = first_order[ok] / nk
    out[ok] = nk / (nk + r) * expected + r / (nk + r) * gmm.means[ok]
    return out.ravel()


class UniversalBackgroundModel(TransformerMixin, BaseEstimator):
    """scikit-learn wrapper: ``fit`` trains the UBM, ``transform`` gives posteriors."""

    def __init__(self, n_components=64, max_iter=100, tol=1e-6, seed=0, max_frames=500_000):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed
        self.max_frames = max_frames

    def fit(self, X, y=None):
        self.gmm_, self.log_likelihood_history_ = train_ubm(
            X, self.n_components, seed=self.seed, max_iter=self.max_iter, tol=self.tol,
            max_frames=self.max_frames)
        self.n_iter_ = len(self.log_likelihood_history_)
        self.n_features_in_ = self.gmm_.n_features
        return self

    def transform(self, X):
        check_is_fitted(self, "gmm_")
        return self.gmm_.posteriors(check_array(X))

    predict_proba = transform

    def score(self, X, y=None):
        check_is_fitted(self, "gmm_")
        return self.gmm_.score(check_array(X))
