"""Outer-variable update rules: plain gradient descent and Adam."""

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class OuterState:
    x: np.ndarray
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, x, **adam_coeffs):
        x = np.array(x, dtype=float)
        return cls(x=x, m=np.zeros_like(x), v=np.zeros_like(x), **adam_coeffs)


def gd_step(state, grad, beta):
    if not beta > 0:
        raise ValueError("beta must be > 0")
    return replace(state, x=state.x - beta * np.asarray(grad), t=state.t + 1)


def adam_step(state, grad, lr):
    """Bias-corrected Adam (Kingma & Ba defaults unless overridden in the state)."""
    if not lr > 0:
        raise ValueError("lr must be > 0")
    g = np.asarray(grad, dtype=float)
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    x = state.x - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, x=x, m=m, v=v, t=t)
