"""Adam optimizer over a ParamSet."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .nn import GradSet, ParamSet


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    v: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @staticmethod
    def for_params(
        params: ParamSet,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-7,
    ) -> "AdamState":
        state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for idx, (w, b) in params.items():
            state.m[idx] = (np.zeros_like(w), np.zeros_like(b))
            state.v[idx] = (np.zeros_like(w), np.zeros_like(b))
        return state


def adam_step(state: AdamState, params: ParamSet, grads: GradSet) -> ParamSet:
    """One Adam update; mutates state moments in place, returns new params.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
    theta <- theta - lr * m/(1-b1^t) / (sqrt(v/(1-b2^t)) + eps)
    """
    if set(grads) != set(params):
        raise ShapeError(f"grad layers {sorted(grads)} != param layers {sorted(params)}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    new_params: ParamSet = {}
    for idx in params:
        updated = []
        for slot in (0, 1):
            theta = params[idx][slot]
            g = grads[idx][slot]
            if g.shape != theta.shape:
                raise ShapeError(
                    f"layer {idx} grad shape {g.shape} != param shape {theta.shape}"
                )
            g = g.astype(theta.dtype, copy=False)
            m = state.m[idx][slot]
            v = state.v[idx][slot]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
            updated.append((theta - step).astype(theta.dtype, copy=False))
        new_params[idx] = (updated[0], updated[1])
    return new_params
