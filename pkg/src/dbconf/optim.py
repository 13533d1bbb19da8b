"""Adam optimizer over named parameter collections."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError, Tensor


class AdamState:
    """Per-parameter first/second moment buffers plus the step counter."""

    def __init__(self, params: dict[str, Tensor], lr=1e-3, beta1=0.9,
                 beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], state: AdamState):
    """One bias-corrected Adam update; parameters with no grad are skipped."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter shape "
                f"{p.data.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        mhat = m / bc1
        vhat = v / bc2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.epsilon)


def zero_grads(params: dict[str, Tensor]):
    for p in params.values():
        p.grad = None
