import numpy as np
import pytest
from scipy.optimize import minimize

from milaed.svm import LinearModel, LinearSVM, decision, primal_objective, train_linear_svm


def test_symmetric_pair():
    X = np.array([[-1.0, 0.0], [1.0, 0.0]])
    m = train_linear_svm(X, [-1, 1], C=100)
    assert np.sign(decision(m, X[0])) == -1
    assert np.sign(decision(m, X[1])) == 1


def separable(seed, n=60):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-3, 0.5, (n // 2, 2)), rng.normal(3, 0.5, (n // 2, 2))])
    return X, np.r_[-np.ones(n // 2), np.ones(n // 2)]


def test_separable_large_c():
    X, y = separable(0)
    m = train_linear_svm(X, y, C=100)
    margins = y * m.decision(X)
    assert np.maximum(0, 1 - margins).sum() <= 1e-3
    assert (np.sign(margins) > 0).all()


def qp_oracle(X, y, C):
    """Primal with slacks, solved by SLSQP: min 0.5(|w|^2 + b^2) + C sum(xi)."""
    n, d = X.shape

    def obj(z):
        return 0.5 * z[:d + 1] @ z[:d + 1] + C * z[d + 1:].sum()

    cons = [{"type": "ineq", "fun": lambda z: y * (X @ z[:d] + z[d]) - 1 + z[d + 1:]},
            {"type": "ineq", "fun": lambda z: z[d + 1:]}]
    z0 = np.r_[np.zeros(d + 1), np.ones(n)]
    res = minimize(obj, z0, constraints=cons, method="SLSQP",
                   options={"maxiter": 1000, "ftol": 1e-12})
    w, b = res.x[:d], res.x[d]
    return primal_objective(w, b, X, y, C)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("C", [0.1, 1.0, 10.0])
def test_matches_qp_oracle(seed, C):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 2))
    y = np.where(X[:, 0] + 0.5 * rng.normal(size=20) > 0, 1.0, -1.0)
    y[:2] = [1, -1]
    m = train_linear_svm(X, y, C=C, tol=1e-6, max_epochs=20000)
    ours = m.metadata["primal_objective"]
    assert ours <= qp_oracle(X, y, C) * 1.01


def test_grid_oracle_small():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(12, 2))
    y = np.where(X[:, 1] > 0, 1.0, -1.0)
    m = train_linear_svm(X, y, C=1.0, tol=1e-6, max_epochs=20000)
    g = np.linspace(-3, 3, 61)
    W1, W2, B = np.meshgrid(g, g, g, indexing="ij")
    W = np.stack([W1.ravel(), W2.ravel()], 1)
    margins = y[None, :] * (W @ X.T + B.ravel()[:, None])
    obj = 0.5 * (W ** 2).sum(1) + 0.5 * B.ravel() ** 2 + np.maximum(0, 1 - margins).sum(1)
    assert m.metadata["primal_objective"] <= obj.min() * 1.01


def test_decision_examples():
    assert decision(LinearModel(np.zeros(3), 0.5, 1.0), np.array([1.0, -4.0, 9.0])) == 0.5
    assert decision(LinearModel(np.array([1.0, -1.0]), 0.0, 1.0), np.array([3.0, 3.0])) == 0.0
    rng = np.random.default_rng(0)
    w, x, b = rng.normal(size=7), rng.normal(size=7), rng.normal()
    naive = b
    for wi, xi in zip(w, x):
        naive += wi * xi
    assert decision(LinearModel(w, b, 1.0), x) == pytest.approx(naive, abs=1e-12)
    with pytest.raises(ValueError, match="dimension mismatch"):
        decision(LinearModel(w, b, 1.0), x[:3])


@pytest.mark.parametrize("C", [0.01, 1.0, 100.0])
def test_dual_objective_monotone(C):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 5))
    y = np.where(X @ rng.normal(size=5) + rng.normal(size=200) > 0, 1.0, -1.0)
    m = train_linear_svm(X, y, C=C, tol=1e-8, max_epochs=300)
    hist = np.array(m.metadata["dual_objective"])
    assert np.all(np.diff(hist) <= 1e-9)


def test_duality_gap_at_convergence():
    X, y = separable(3, 100)
    X = X + np.random.default_rng(0).normal(0, 2, X.shape)
    m = train_linear_svm(X, y, C=1.0, tol=1e-4, max_epochs=5000)
    assert m.metadata["converged"]
    dual = -m.metadata["dual_objective"][-1]
    primal = m.metadata["primal_objective"]
    assert primal - dual <= 1e-4 * max(1, primal) + 1e-9


def test_warm_start_reaches_same_solution():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(150, 3))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    cold = train_linear_svm(X, y, C=1.0, tol=1e-6, max_epochs=5000)
    warm = train_linear_svm(X, y, C=1.0, tol=1e-6, max_epochs=5000,
                            alpha0=cold.metadata["alpha"])
    assert warm.metadata["epochs"] <= cold.metadata["epochs"]
    assert warm.metadata["primal_objective"] == pytest.approx(
        cold.metadata["primal_objective"], rel=1e-4)


def test_errors():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError, match="degenerate"):
        train_linear_svm(X, [1, 1, 1])
    with pytest.raises(ValueError):
        train_linear_svm(X, [1, -1, 1], C=0)
    with pytest.raises(ValueError):
        train_linear_svm(X, [1, 0, 1])


def test_estimator_api_and_determinism():
    X, y = separable(5)
    a = LinearSVM(C=2.0, seed=3).fit(X, y)
    b = LinearSVM(C=2.0, seed=3).fit(X, y)
    assert a.coef_.tobytes() == b.coef_.tobytes()
    assert (a.predict(X) == y).all()
    assert a.get_params()["C"] == 2.0
