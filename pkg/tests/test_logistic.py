import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adexpert.mlcore.logistic import LogisticHyper, fit_logistic, fit_softmax_batch, predict_batch, predict_logistic
from adexpert.mlcore.scaler import fit_transform

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def test_separable_1d():
    X = np.array([[-5.0], [-5.0], [5.0], [5.0]])
    y = np.array([0, 0, 1, 1])
    m = fit_logistic(X, y)
    assert np.array_equal(predict_logistic(m, X), y)


def test_zero_iterations_predicts_lowest_class():
    X = np.random.default_rng(0).normal(size=(10, 3))
    y = np.array([2, 1] * 5)
    m = fit_logistic(X, y, LogisticHyper(iterations=0), n_classes=3)
    assert not m.weights.any() and not m.bias.any()
    assert predict_logistic(m, X).tolist() == [0] * 10
    assert m.loss_trace.shape == (1,)
    assert m.loss_trace[0] == pytest.approx(np.log(3))


def best_linear_accuracy_xor() -> float:
    """Brute force over a grid of lines w.x + b: the largest fraction of the
    four XOR points any linear two-class rule labels correctly."""
    best = 0.0
    grid = np.linspace(-2, 2, 41)
    for w1, w2, b in itertools.product(grid, grid, grid):
        side = (XOR_X @ [w1, w2] + b) > 0
        for flip in (False, True):
            best = max(best, float(np.mean((side ^ flip) == XOR_Y.astype(bool))))
    return best


def test_xor_is_not_linearly_separable():
    assert best_linear_accuracy_xor() == 0.75
    m = fit_logistic(XOR_X, XOR_Y, LogisticHyper(iterations=2000))
    assert np.mean(predict_logistic(m, XOR_X) == XOR_Y) <= 0.75


def test_single_class_rejected():
    with pytest.raises(ValueError):
        fit_logistic(np.zeros((3, 1)), np.zeros(3))


def test_deterministic():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(40, 4)), rng.integers(0, 3, 40)
    a, b = fit_logistic(X, y), fit_logistic(X, y)
    assert a.weights.tobytes() == b.weights.tobytes()


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(15, 3)), rng.integers(0, 3, 15)
    hyper = LogisticHyper(learning_rate=1e-3, iterations=1, l2=0.3)

    def objective(W, b):
        Z = X @ W.T + b
        Z = Z - Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        return -logp[np.arange(15), y].mean() + 0.5 * hyper.l2 * (W * W).sum()

    W1, b1, trace = fit_softmax_batch(X[None], y, 3, hyper)
    # one step from zero: W1 = -lr * grad
    grad_W = -W1[0] / hyper.learning_rate
    num = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            E = np.zeros((3, 3))
            E[i, j] = 1e-6
            num[i, j] = (objective(E, np.zeros(3)) - objective(-E, np.zeros(3))) / 2e-6
    assert np.allclose(grad_W, num, atol=1e-7)
    assert trace[0, 0] == pytest.approx(objective(np.zeros((3, 3)), np.zeros(3)))
    assert trace[0, 1] == pytest.approx(objective(W1[0], b1[0]))


def test_batch_equals_individual_fits():
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(30, 4)), rng.integers(0, 3, 30)
    Xb = np.stack([X[:, :2], X[:, 2:]])
    W, b, _ = fit_softmax_batch(Xb, y, 3, LogisticHyper(iterations=50))
    for i in range(2):
        m = fit_logistic(Xb[i], y, LogisticHyper(iterations=50), n_classes=3)
        assert np.allclose(W[i], m.weights, atol=1e-12)
        assert np.array_equal(predict_batch(W, b, Xb)[i], predict_logistic(m, Xb[i]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(10, 60), st.integers(1, 8))
def test_loss_trace_monotone_at_default_rate(seed, n, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) + rng.integers(0, 3, n)[:, None]
    y = rng.integers(0, 3, n)
    y[:2] = [0, 1]
    _, Z = fit_transform(X)
    m = fit_logistic(Z, y, LogisticHyper(iterations=200))
    assert np.all(np.isfinite(m.weights))
    assert np.all(np.diff(m.loss_trace) <= 1e-12)
