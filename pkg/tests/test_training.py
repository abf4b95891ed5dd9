import numpy as np
import pytest

from pqfl.circuits import ModelParams, model_scores
from pqfl.training import AdamState, Batch, adam_step, cross_entropy_loss, local_train, loss_and_gradient, loss_gradient
from oracles import client_unitary, cross_entropy, z_scores


def oracle_loss(vec, x, y, n=4, k=3):
    nb = 4 * n * k
    u = client_unitary(vec[:nb], vec[nb:], n, k)
    return cross_entropy([z_scores(u, xi, n) for xi in x], y)


def fd_gradient(vec, x, y, h=1e-5):
    out = np.empty_like(vec)
    for i in range(vec.size):
        e = np.zeros_like(vec)
        e[i] = h
        out[i] = (oracle_loss(vec + e, x, y) - oracle_loss(vec - e, x, y)) / (2 * h)
    return out


def test_loss_examples():
    for x in (-1.0, 0.0, 0.37):
        for y in (0, 1):
            assert cross_entropy_loss([[x, x]], [y]) == pytest.approx(np.log(2), abs=1e-12)
    assert cross_entropy_loss([[1, -1]], [0]) == pytest.approx(0.126928, abs=1e-6)
    assert cross_entropy_loss([[1, -1]], [1]) == pytest.approx(2.126928, abs=1e-6)


def test_loss_matches_oracle_and_nonnegative():
    rng = np.random.default_rng(0)
    s = rng.uniform(-1, 1, (30, 2))
    y = rng.integers(0, 2, 30)
    assert cross_entropy_loss(s, y) == pytest.approx(cross_entropy(s, y), abs=1e-12)
    assert cross_entropy_loss(s, y) >= 0


def test_loss_errors():
    with pytest.raises(ValueError):
        cross_entropy_loss(np.zeros((0, 2)), [])
    with pytest.raises(ValueError):
        cross_entropy_loss([[0, 0]], [0, 1])


@pytest.mark.parametrize("x", [np.eye(16)[0], np.full(16, 0.25)])
def test_symmetric_batch_zero_gradient(x):
    # identity circuit: both inputs give equal class scores, so each label pulls equally
    g = loss_gradient(ModelParams(np.zeros(48), np.zeros(8)), Batch([x, x], [0, 1]))
    assert g.shape == (56,)
    assert np.abs(g).max() < 1e-9


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        p = ModelParams(rng.uniform(0, np.pi, 48), rng.uniform(0, np.pi, 8))
        x = rng.uniform(0, 1, (1, 16))
        x /= np.linalg.norm(x)
        y = rng.integers(0, 2, 1)
        loss, g = loss_and_gradient(p, Batch(x, y))
        assert loss == pytest.approx(oracle_loss(p.vector(), x, y), abs=1e-12)
        fd = fd_gradient(p.vector(), x, y)
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6))))
    assert worst < 1e-4


def test_gradient_without_personal_layer():
    rng = np.random.default_rng(3)
    p = ModelParams(rng.uniform(0, np.pi, 48))
    x = rng.uniform(0, 1, (4, 16))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = np.array([0, 1, 1, 0])
    g = loss_gradient(p, Batch(x, y))
    fd = fd_gradient(p.vector(), x, y)
    assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6)) < 1e-4


def test_adam_zero_gradient():
    st = AdamState.zeros(3)
    p = np.array([0.1, 0.2, 0.3])
    out, st = adam_step(st, p, np.zeros(3))
    np.testing.assert_array_equal(out, p)
    assert st.t == 1


def test_adam_first_step_magnitude():
    st = AdamState.zeros(3, lr=0.01)
    out, _ = adam_step(st, np.zeros(3), np.array([0.5, -2.0, 1e-3]))
    # bias-corrected first step is -lr * g / (|g| + eps)
    np.testing.assert_allclose(out, -0.01 * np.array([0.5, -2.0, 1e-3]) / (np.abs([0.5, -2.0, 1e-3]) + 1e-8))


def test_adam_constant_gradient():
    st = AdamState.zeros(2, lr=0.01)
    p = np.zeros(2)
    g = np.array([3.0, -0.2])
    for _ in range(500):
        new, st = adam_step(st, p, g)
        step = new - p
        p = new
    np.testing.assert_allclose(step, -0.01 * np.sign(g), rtol=1e-6)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros(3), np.zeros(3), np.zeros(4))


def toy_set():
    a = np.eye(16)[0]
    b = np.eye(16)[3]
    return np.array([a, b]), np.array([0, 1])


def test_zero_epochs_is_noop():
    x, y = toy_set()
    p = ModelParams(np.full(48, 0.4), np.full(8, 0.2))
    out = local_train(x, y, p, 0, 50, AdamState.zeros(56), np.random.default_rng(0))
    np.testing.assert_array_equal(out.params.vector(), p.vector())
    assert out.epoch_losses == []


def test_one_epoch_improves_toy_loss():
    x, y = toy_set()
    rng = np.random.default_rng(4)
    p = ModelParams(rng.uniform(0, np.pi, 48), np.zeros(8))
    before = cross_entropy_loss(model_scores(p, x), y)
    out = local_train(x, y, p, 1, 50, AdamState.zeros(56, lr=0.05), np.random.default_rng(0))
    assert cross_entropy_loss(model_scores(out.params, x), y) < before
    assert out.epoch_losses[0] == pytest.approx(before, abs=1e-12)


def test_local_train_deterministic_and_projected():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, (120, 16))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = rng.integers(0, 2, 120)
    p = ModelParams(rng.uniform(0, np.pi, 48), np.zeros(8))
    runs = [
        local_train(x, y, p, 2, 50, AdamState.zeros(56, lr=0.2), np.random.default_rng(9), base_bounds=(0, np.pi - 0.05))
        for _ in range(2)
    ]
    assert runs[0].params.vector().tobytes() == runs[1].params.vector().tobytes()
    assert runs[0].epoch_losses == runs[1].epoch_losses
    tb = runs[0].params.theta_b
    assert tb.min() >= 0 and tb.max() <= np.pi - 0.05
    assert runs[0].n_projected > 0  # lr 0.2 pushes some angles through the walls


def test_short_final_batch_counts():
    rng = np.random.default_rng(6)
    x = rng.uniform(0, 1, (7, 16))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = rng.integers(0, 2, 7)
    st = AdamState.zeros(56)
    local_train(x, y, ModelParams(np.zeros(48), np.zeros(8)), 1, 3, st, np.random.default_rng(0))
    assert st.t == 3  # batches of 3, 3, 1
