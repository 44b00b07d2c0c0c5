import numpy as np
import pytest

from tablere.errors import ConfigError, ShapeError
from tablere.tensor import init_optimizer, optimizer_step


def test_adam_first_step_is_lr_sized():
    p = np.zeros(5)
    g = np.array([1e-3, -2.0, 0.5, 30.0, -1e-2])
    state = init_optimizer("adam", [p], lr=1e-3)
    optimizer_step([p], [g], state)
    # first step: m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
    np.testing.assert_allclose(np.abs(p), 1e-3 * np.abs(g) / (np.abs(g) + 1e-7), rtol=1e-12)
    np.testing.assert_allclose(np.abs(p), 1e-3, rtol=1e-3)
    assert np.all(np.sign(p) == -np.sign(g))
    assert state.step == 1


@pytest.mark.parametrize("kind", ["adam", "rmsprop"])
def test_zero_gradient_leaves_params(kind):
    p = np.array([1.0, -2.0, 3.0])
    before = p.copy()
    state = init_optimizer(kind, [p], lr=0.1)
    for _ in range(3):
        optimizer_step([p], [np.zeros(3)], state)
    np.testing.assert_array_equal(p, before)


def test_rmsprop_constant_gradient_converges_to_sign_step():
    p = np.zeros(3)
    g = np.array([0.3, -4.0, 2e-2])
    lr = 1e-2
    state = init_optimizer("rmsprop", [p], lr=lr)
    prev = p.copy()
    for _ in range(300):
        optimizer_step([p], [g], state)
        step = p - prev
        prev = p.copy()
    # accumulator -> g^2, step -> lr * g / |g|
    np.testing.assert_allclose(step, -lr * np.sign(g), rtol=1e-4)


def test_adam_matches_closed_form_two_steps():
    p = np.array([0.5])
    g1, g2 = 0.2, -0.6
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-7
    state = init_optimizer("adam", [p], lr=lr)
    optimizer_step([p], [np.array([g1])], state)
    optimizer_step([p], [np.array([g2])], state)
    x = 0.5
    m = v = 0.0
    for t, g in enumerate([g1, g2], 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    assert p[0] == pytest.approx(x, rel=1e-14)


def test_float32_params_stay_float32():
    p = np.ones(4, dtype=np.float32)
    state = init_optimizer("adam", [p], lr=2e-5)
    optimizer_step([p], [np.ones(4, dtype=np.float32)], state)
    assert p.dtype == np.float32


def test_shape_mismatch():
    p = np.zeros(3)
    state = init_optimizer("adam", [p], lr=0.1)
    with pytest.raises(ShapeError):
        optimizer_step([p], [np.zeros(4)], state)


def test_unknown_kind():
    with pytest.raises(ConfigError):
        init_optimizer("sgd", [np.zeros(1)], lr=0.1)
