"""BP-MIL: one-hidden-layer sigmoid network trained on the max-instance bag error."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .misvm import _Standardizer, as_bag_arrays, bag_labels_of

logger = logging.getLogger(__name__)

# hidden sizes tried per input type; the middle entry is the default
HIDDEN_SIZES = {("F", 64): (16, 50, 100), ("F", 128): (50, 100, 150), ("F+M", None): (256, 512)}


def default_hidden(feature_mode: str = "F", n_components: int = 64) -> int:
    if feature_mode == "F+M":
        return HIDDEN_SIZES[("F+M", None)][0]
    sizes = HIDDEN_SIZES.get(("F", n_components), HIDDEN_SIZES[("F", 64)])
    return sizes[1]


@dataclass
class MilNet:
    hidden_weights: np.ndarray
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: float

    @property
    def n_hidden(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def n_params(self) -> int:
        return self.hidden_weights.size + self.hidden_bias.size + self.output_weights.size + 1

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.hidden_weights.ravel(), self.hidden_bias,
                               self.output_weights, [self.output_bias]])

    @classmethod
    def from_vector(cls, theta, input_dim: int, n_hidden: int) -> "MilNet":
        theta = np.asarray(theta, dtype=np.float64)
        a = n_hidden * input_dim
        return cls(theta[:a].reshape(n_hidden, input_dim).copy(),
                   theta[a:a + n_hidden].copy(),
                   theta[a + n_hidden:a + 2 * n_hidden].copy(),
                   float(theta[a + 2 * n_hidden]))

    def copy(self) -> "MilNet":
        return MilNet.from_vector(self.to_vector(), self.input_dim, self.n_hidden)

    def hidden(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.input_dim:
            raise ValueError("dimension mismatch: network expects %d inputs, got %d"
                             % (self.input_dim, X.shape[-1]))
        return expit(X @ self.hidden_weights.T + self.hidden_bias)

    def forward(self, X):
        """Network output in (0, 1); a float for one vector, an array for rows."""
        out = expit(self.hidden(X) @ self.output_weights + self.output_bias)
        return float(out) if np.ndim(out) == 0 else out


def init_net(input_dim: int, n_hidden: int, seed: int = 0) -> MilNet:
    """Glorot-uniform weights, zero biases."""
    if input_dim < 1 or n_hidden < 1:
        raise ValueError("input_dim and n_hidden must be >= 1")
    rng = np.random.default_rng(seed)
    a1 = np.sqrt(6.0 / (input_dim + n_hidden))
    a2 = np.sqrt(6.0 / (n_hidden + 1))
    return MilNet(rng.uniform(-a1, a1, size=(n_hidden, input_dim)), np.zeros(n_hidden),
                  rng.uniform(-a2, a2, size=n_hidden), 0.0)


def forward(net: MilNet, x):
    return net.forward(x)


def bag_divergence(net: MilNet, bag, d: int):
    """Returns ``(E, j)``: half squared error of the bag's max output, and its index."""
    X = np.atleast_2d(np.asarray(getattr(bag, "instances", bag), dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty bag")
    out = np.atleast_1d(net.forward(X))
    j = int(np.argmax(out))
    return 0.5 * (out[j] - d) ** 2, j


def instance_gradient(net: MilNet, x, d: int) -> MilNet:
    """Gradient of ``0.5 * (o(x) - d)^2`` w.r.t. every parameter, as a MilNet."""
    x = np.asarray(x, dtype=np.float64)
    h = net.hidden(x)
    o = expit(h @ net.output_weights + net.output_bias)
    delta_o = (o - d) * o * (1.0 - o)
    delta_h = delta_o * net.output_weights * h * (1.0 - h)
    return MilNet(np.outer(delta_h, x), delta_h, delta_o * h, float(delta_o))


def bag_gradient(net: MilNet, bag, d: int) -> MilNet:
    """Subgradient of the bag error: backpropagated through the max instance only."""
    X = np.atleast_2d(np.asarray(getattr(bag, "instances", bag), dtype=np.float64))
    _, j = bag_divergence(net, X, d)
    return instance_gradient(net, X[j], d)


def _step(net: MilNet, grad: MilNet, lr: float) -> None:
    net.hidden_weights -= lr * grad.hidden_weights
    net.hidden_bias -= lr * grad.hidden_bias
    net.output_weights -= lr * grad.output_weights
    net.output_bias -= lr * grad.output_bias


@dataclass
class TrainSchedule:
    epochs: int = 60
    lr_policy: str = "const"
    lr: float = 0.1
    final_lr: float = 0.01
    decay_start: int = 30
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.lr_policy not in ("const", "decay"):
            raise ValueError("lr_policy must be 'const' or 'decay'")
        if self.lr <= 0 or self.final_lr <= 0:
            raise ValueError("learning rates must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``.

        ``decay`` holds ``lr`` for ``decay_start`` epochs, then falls
        linearly to ``final_lr`` at the last epoch.
        """
        if self.lr_policy == "const" or epoch <= self.decay_start:
            return self.lr
        span = max(self.epochs - self.decay_start, 1)
        frac = min((epoch - self.decay_start) / span, 1.0)
        return self.lr + frac * (self.final_lr - self.lr)


def total_divergence(net: MilNet, arrays, targets) -> float:
    return float(sum(bag_divergence(net, X, d)[0] for X, d in zip(arrays, targets)))


def train_bpmil(bags, y=None, schedule: TrainSchedule | None = None, n_hidden: int = 50,
                net: MilNet | None = None):
    """Incremental bag-wise backpropagation.

    Returns ``(net, history)`` with ``history[e]`` the summed bag error
    after epoch ``e`` (``history[0]`` is before training).
    """
    schedule = schedule or TrainSchedule()
    arrays = as_bag_arrays(bags)
    y = bag_labels_of(bags, y)
    if not (y == 1).any() or not (y == -1).any():
        raise ValueError("BP-MIL needs at least one positive and one negative bag")
    targets = (y == 1).astype(float)
    rng = np.random.default_rng(schedule.seed)
    if net is None:
        net = init_net(arrays[0].shape[1], n_hidden, seed=int(rng.integers(2**31 - 1)))
    history = [total_divergence(net, arrays, targets)]
    for epoch in range(1, schedule.epochs + 1):
        lr = schedule.lr_at(epoch)
        for i in rng.permutation(len(arrays)):
            _step(net, bag_gradient(net, arrays[i], targets[i]), lr)
        history.append(total_divergence(net, arrays, targets))
        if not np.isfinite(history[-1]) or not np.all(np.isfinite(net.to_vector())):
            raise FloatingPointError(
                "BP-MIL diverged at epoch %d (lr=%g); try a smaller learning rate" % (epoch, lr))
        if history[-1] < schedule.tol:
            break
    logger.debug("BP-MIL: %d epochs, error %.4g -> %.4g", len(history) - 1, history[0], history[-1])
    return net, history


def predict_instance(net: MilNet, x):
    return net.forward(x)


def predict_bag(net: MilNet, bag) -> float:
    X = np.atleast_2d(np.asarray(getattr(bag, "instances", bag), dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty bag")
    return float(np.max(np.atleast_1d(net.forward(X))))


class BPMIL(ClassifierMixin, BaseEstimator, _Standardizer):
    """Bag classifier trained with BP-MIL; bag score is the max instance output."""

    def __init__(self, hidden=50, epochs=60, lr_policy="const", lr=0.1, final_lr=0.01,
                 tol=1e-4, standardize=True, seed=0):
        self.hidden = hidden
        self.epochs = epochs
        self.lr_policy = lr_policy
        self.lr = lr
        self.final_lr = final_lr
        self.tol = tol
        self.standardize = standardize
        self.seed = seed

    def fit(self, bags, y=None):
        arrays = as_bag_arrays(bags)
        y = bag_labels_of(bags, y)
        self.mean_ = self.scale_ = None
        if self.standardize:
            self.fit_stats(np.vstack(arrays))
        schedule = TrainSchedule(epochs=self.epochs, lr_policy=self.lr_policy, lr=self.lr,
                                 final_lr=self.final_lr, tol=self.tol, seed=self.seed)
        self.net_, self.loss_history_ = train_bpmil(
            [self._scale(a) for a in arrays], y, schedule, n_hidden=self.hidden)
        self.n_epochs_ = len(self.loss_history_) - 1
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = arrays[0].shape[1]
        return self

    def instance_decision_function(self, bags) -> list:
        check_is_fitted(self, "net_")
        return [np.atleast_1d(self.net_.forward(self._scale(a))) for a in as_bag_arrays(bags)]

    def decision_function(self, bags) -> np.ndarray:
        return np.array([s.max() for s in self.instance_decision_function(bags)])

    def predict(self, bags):
        return np.where(self.decision_function(bags) >= 0.5, 1, -1)
