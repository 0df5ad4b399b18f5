"""Loss functions for the damaged-sign classifier plus binary metrics.

All losses take logits, not probabilities: the network's final sigmoid is
folded into the loss during training for numeric safety.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch


@dataclass(frozen=True)
class FocalConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    epsilon: float = 1e-7  # probability clamp before log

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must be in (0, 0.5), got {self.epsilon}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_focal_ce(
    z: np.ndarray | float, y: np.ndarray | float, cfg: FocalConfig = FocalConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Per-element focal cross-entropy on logits and its d/dz.

    With p = sigmoid(z) clamped to [eps, 1-eps]:
      loss = -alpha*y*(1-p)^gamma*log(p) - (1-alpha)*(1-y)*p^gamma*log(1-p)

    Where the clamp binds, p is constant in z, so the gradient is 0 there;
    everywhere else dp/dz = p*(1-p). Reduce with .mean() for a batch loss.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    eps = cfg.epsilon
    p_raw = _sigmoid(z)
    p = np.clip(p_raw, eps, 1.0 - eps)
    one_m_p = 1.0 - p

    log_p = np.log(p)
    log_1mp = np.log(one_m_p)
    loss = -cfg.alpha * y * one_m_p**cfg.gamma * log_p - (1.0 - cfg.alpha) * (
        1.0 - y
    ) * p**cfg.gamma * log_1mp

    # d loss / d p, with the gamma term dropped when gamma == 0 (0 * log form)
    if cfg.gamma == 0.0:
        dl_dp = -cfg.alpha * y / p + (1.0 - cfg.alpha) * (1.0 - y) / one_m_p
    else:
        dl_dp = cfg.alpha * y * (
            cfg.gamma * one_m_p ** (cfg.gamma - 1.0) * log_p - one_m_p**cfg.gamma / p
        ) + (1.0 - cfg.alpha) * (1.0 - y) * (
            -cfg.gamma * p ** (cfg.gamma - 1.0) * log_1mp + p**cfg.gamma / one_m_p
        )
    dp_dz = np.where((p_raw > eps) & (p_raw < 1.0 - eps), p_raw * (1.0 - p_raw), 0.0)
    return loss, dl_dp * dp_dz


def bce_with_logits(
    z: np.ndarray | float, y: np.ndarray | float
) -> tuple[np.ndarray, np.ndarray]:
    """Numerically stable binary cross-entropy on logits; grad = sigmoid(z) - y."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return loss, _sigmoid(z) - y


def label_smooth(y: np.ndarray | float, eps_s: float) -> np.ndarray:
    """y' = y*(1-eps_s) + eps_s/2."""
    if not 0.0 <= eps_s < 1.0:
        raise ValueError(f"smoothing must be in [0,1), got {eps_s}")
    return np.asarray(y, dtype=np.float64) * (1.0 - eps_s) + eps_s / 2.0


def binary_metrics(
    probs, labels, threshold: float = 0.5
) -> dict[str, float | int]:
    """Accuracy/precision/recall at `threshold` plus the raw confusion counts.

    p >= threshold counts as positive. Precision (recall) is reported as 1.0
    when its denominator is 0; the counts disambiguate.
    """
    probs = list(probs)
    labels = list(labels)
    if len(probs) != len(labels):
        raise LengthMismatch(f"{len(probs)} probs vs {len(labels)} labels")
    if not probs:
        raise LengthMismatch("need at least one sample")
    tp = fp = fn = tn = 0
    for p, y in zip(probs, labels):
        pred = 1 if p >= threshold else 0
        if pred == 1 and y == 1:
            tp += 1
        elif pred == 1 and y == 0:
            fp += 1
        elif pred == 0 and y == 1:
            fn += 1
        else:
            tn += 1
    return {
        "accuracy": (tp + tn) / len(probs),
        "precision": tp / (tp + fp) if tp + fp else 1.0,
        "recall": tp / (tp + fn) if tp + fn else 1.0,
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
    }
