"""Bias-corrected Adam on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..exceptions import TrainingDivergenceError

__all__ = ["AdamState", "adam_init", "adam_step"]


@dataclass(frozen=True)
class AdamState:
    t: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(n_params: int, lr: float = 3e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        t=0, m=np.zeros(n_params), v=np.zeros(n_params),
        lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(state: AdamState, params: np.ndarray,
              grad: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected update; pure (returns fresh state and parameters)."""
    if grad.shape != params.shape:
        raise ValueError("gradient and parameter shapes differ")
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergenceError("non-finite gradient", epoch=state.t)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, t=t, m=m, v=v), new_params
