import numpy as np
import pytest

from roadsight.errors import ShapeError
from roadsight.optim import AdamState, adam_step


def make_params():
    return {
        0: (np.array([1.0, -2.0], dtype=np.float32), np.array([0.5], dtype=np.float32)),
        2: (np.full((2, 2), 3.0, dtype=np.float32), np.zeros(2, dtype=np.float32)),
    }


def zero_grads(params):
    return {i: (np.zeros_like(w), np.zeros_like(b)) for i, (w, b) in params.items()}


def test_zero_gradient_is_fixed_point():
    params = make_params()
    state = AdamState.for_params(params)
    cur = params
    for _ in range(5):
        cur = adam_step(state, cur, zero_grads(cur))
    for idx in params:
        assert np.array_equal(cur[idx][0], params[idx][0])
        assert np.array_equal(cur[idx][1], params[idx][1])


def test_first_step_magnitude_is_lr():
    # at t=1 bias correction cancels g's scale: |step| = lr*|g|/(|g|+eps)
    params = {0: (np.array([1.0, 1.0]), np.array([1.0]))}
    grads = {0: (np.array([0.3, -40.0]), np.array([5e-3]))}
    state = AdamState.for_params(params, lr=1e-3, eps=1e-12)
    new = adam_step(state, params, grads)
    delta_w = new[0][0] - params[0][0]
    assert np.allclose(np.abs(delta_w), 1e-3, rtol=1e-6)
    assert np.allclose(np.sign(delta_w), [-1.0, 1.0])  # direction -sign(g)
    assert abs(abs(new[0][1][0] - 1.0) - 1e-3) < 1e-9


def test_uniform_rescaling_invariance_at_t1():
    params = {0: (np.array([0.0, 0.0, 0.0]), np.array([0.0]))}
    g = np.array([0.2, -1.5, 7.0])
    s1 = AdamState.for_params(params, eps=1e-12)
    s2 = AdamState.for_params(params, eps=1e-12)
    p1 = adam_step(s1, params, {0: (g, np.array([1.0]))})
    p2 = adam_step(s2, params, {0: (1000.0 * g, np.array([1000.0]))})
    assert np.allclose(p1[0][0], p2[0][0], atol=1e-9)
    assert np.allclose(p1[0][0], -1e-3 * np.sign(g), atol=1e-8)


def test_equal_gradients_update_identically():
    params = {0: (np.array([5.0, 5.0]), np.array([5.0]))}
    grads = {0: (np.array([0.7, 0.7]), np.array([0.7]))}
    state = AdamState.for_params(params)
    new = adam_step(state, params, grads)
    assert new[0][0][0] == new[0][0][1] == new[0][1][0]


def test_moments_track_hand_recurrence():
    params = {0: (np.array([0.0]), np.array([0.0]))}
    state = AdamState.for_params(params, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    g1, g2 = np.array([1.0]), np.array([-2.0])
    p = adam_step(state, params, {0: (g1, np.zeros(1))})
    p = adam_step(state, p, {0: (g2, np.zeros(1))})
    # hand-evaluated recurrence
    m = 0.9 * (0.1 * 1.0) + 0.1 * (-2.0)
    v = 0.999 * (0.001 * 1.0) + 0.001 * 4.0
    mhat = m / (1 - 0.9**2)
    vhat = v / (1 - 0.999**2)
    theta1 = -0.1 * (0.1 / (1 - 0.9)) / (np.sqrt(0.001 / (1 - 0.999)) + 1e-8)
    expected = theta1 - 0.1 * mhat / (np.sqrt(vhat) + 1e-8)
    assert abs(p[0][0][0] - expected) < 1e-9
    assert state.t == 2


def test_shape_mismatch_rejected():
    params = make_params()
    state = AdamState.for_params(params)
    bad = zero_grads(params)
    bad[0] = (np.zeros(3), bad[0][1])
    with pytest.raises(ShapeError):
        adam_step(state, params, bad)
    with pytest.raises(ShapeError):
        adam_step(state, params, {0: zero_grads(params)[0]})


def test_params_stay_float32():
    params = make_params()
    state = AdamState.for_params(params)
    grads = {i: (np.ones_like(w), np.ones_like(b)) for i, (w, b) in params.items()}
    new = adam_step(state, params, grads)
    assert all(new[i][0].dtype == np.float32 for i in new)
