import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import finite_diff

from roadsight.errors import LengthMismatch
from roadsight.losses import (
    FocalConfig,
    bce_with_logits,
    binary_metrics,
    label_smooth,
    sigmoid_focal_ce,
)


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


# -- focal loss -------------------------------------------------------------


def test_focal_reduces_to_half_bce():
    z = logit(0.9)
    loss, _ = sigmoid_focal_ce(z, 1.0, FocalConfig(alpha=0.5, gamma=0.0))
    assert abs(loss - 0.5 * 0.1053605) < 1e-6
    bce, _ = bce_with_logits(z, 1.0)
    assert abs(loss - 0.5 * bce) < 1e-12


def test_focal_paper_defaults_hand_value():
    # alpha * (1-p)^gamma * (-ln p) at p=0.9: 0.25 * 0.01 * 0.10536052
    z = logit(0.9)
    loss, _ = sigmoid_focal_ce(z, 1.0, FocalConfig(alpha=0.25, gamma=2.0))
    expected = 0.25 * (0.1**2) * (-math.log(0.9))
    assert abs(loss - expected) < 1e-12
    assert abs(loss - 2.6340e-4) < 1e-8


def test_focal_perfect_prediction_clamped():
    cfg = FocalConfig(alpha=0.25, gamma=2.0)
    loss, grad = sigmoid_focal_ce(40.0, 1.0, cfg)
    bound = cfg.alpha * cfg.epsilon**cfg.gamma * (-math.log(1.0 - cfg.epsilon))
    assert 0.0 <= loss <= bound + 1e-30
    assert grad == 0.0  # clamp region: p constant in z


@given(z=st.floats(-15, 15), y=st.sampled_from([0.0, 1.0]))
@settings(max_examples=200, deadline=None)
def test_focal_gamma0_equals_half_bce_property(z, y):
    loss, _ = sigmoid_focal_ce(z, y, FocalConfig(alpha=0.5, gamma=0.0))
    bce, _ = bce_with_logits(z, y)
    assert abs(loss - 0.5 * bce) < 1e-9


def test_focal_nonnegative_and_monotone():
    cfg = FocalConfig(alpha=0.25, gamma=2.0)
    zs = np.linspace(-12, 12, 201)
    loss_pos, _ = sigmoid_focal_ce(zs, np.ones_like(zs), cfg)
    loss_neg, _ = sigmoid_focal_ce(zs, np.zeros_like(zs), cfg)
    assert np.all(loss_pos >= 0) and np.all(loss_neg >= 0)
    assert np.all(np.diff(loss_pos) < 0)  # decreasing in p for y=1
    assert np.all(np.diff(loss_neg) > 0)  # decreasing in 1-p for y=0


@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("y", [0.0, 1.0])
def test_focal_gradient_matches_finite_diff(gamma, y):
    cfg = FocalConfig(alpha=0.25, gamma=gamma)
    rng = np.random.default_rng(int(gamma * 10 + y))
    for z0 in rng.uniform(-10, 10, size=20):
        z = np.array([z0], dtype=np.float64)

        def loss():
            val, _ = sigmoid_focal_ce(z, y, cfg)
            return float(val[0])

        _, grad = sigmoid_focal_ce(z, y, cfg)
        fd = finite_diff(loss, z, h=1e-5)
        assert abs(grad[0] - fd[0]) < 1e-6


# -- bce ---------------------------------------------------------------------


def test_bce_at_zero():
    loss, grad = bce_with_logits(0.0, 1.0)
    assert abs(loss - math.log(2)) < 1e-12
    assert abs(grad - (-0.5)) < 1e-12


def test_bce_matches_naive_formula():
    rng = np.random.default_rng(0)
    for z in rng.uniform(-8, 8, size=100):
        for y in (0.0, 1.0):
            p = 1.0 / (1.0 + math.exp(-z))
            naive = -(y * math.log(p) + (1 - y) * math.log(1 - p))
            loss, _ = bce_with_logits(z, y)
            assert abs(loss - naive) < 1e-6


# -- label smoothing -----------------------------------------------------------


def test_label_smooth():
    assert label_smooth(1.0, 0.0) == 1.0
    assert label_smooth(0.0, 0.0) == 0.0
    assert abs(label_smooth(1.0, 0.1) - 0.95) < 1e-12
    assert abs(label_smooth(0.0, 0.1) - 0.05) < 1e-12


# -- binary metrics --------------------------------------------------------------


def test_metrics_perfect():
    m = binary_metrics([0.9, 0.2], [1, 0])
    assert m["accuracy"] == 1.0 and m["precision"] == 1.0 and m["recall"] == 1.0


def test_metrics_one_false_positive():
    m = binary_metrics([0.9, 0.8], [1, 0])
    assert m["accuracy"] == 0.5
    assert m["precision"] == 0.5
    assert m["recall"] == 1.0
    assert (m["tp"], m["fp"], m["fn"]) == (1, 1, 0)


def test_metrics_all_negative_convention():
    m = binary_metrics([0.1, 0.2, 0.3], [0, 0, 0])
    assert m["accuracy"] == 1.0
    assert m["recall"] == 1.0  # empty denominator convention
    assert m["tp"] == 0 and m["fn"] == 0


def test_metrics_length_mismatch():
    with pytest.raises(LengthMismatch):
        binary_metrics([0.5], [1, 0])
    with pytest.raises(LengthMismatch):
        binary_metrics([], [])


def test_metrics_vs_brute_force_counts():
    rng = np.random.default_rng(77)
    for _ in range(25):
        n = int(rng.integers(1, 101))
        probs = rng.random(n)
        labels = rng.integers(0, 2, n)
        m = binary_metrics(probs, labels)
        tp = sum(1 for p, y in zip(probs, labels) if p >= 0.5 and y == 1)
        fp = sum(1 for p, y in zip(probs, labels) if p >= 0.5 and y == 0)
        fn = sum(1 for p, y in zip(probs, labels) if p < 0.5 and y == 1)
        tn = n - tp - fp - fn
        assert (m["tp"], m["fp"], m["fn"], m["tn"]) == (tp, fp, fn, tn)
        assert m["accuracy"] == (tp + tn) / n
        assert m["precision"] == (tp / (tp + fp) if tp + fp else 1.0)
        assert m["recall"] == (tp / (tp + fn) if tp + fn else 1.0)
