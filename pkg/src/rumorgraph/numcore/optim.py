"""AdamW: bias-corrected Adam moments followed by decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class TrainingStepError(RuntimeError):
    """A parameter update could not be applied (e.g. non-finite gradient)."""


@dataclass
class AdamWState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(state: AdamWState, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> AdamWState:
    """Apply one update in place; raises if any gradient is non-finite."""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingStepError(f"non-finite gradient for parameter {name!r}")
        if params[name].data.shape != grad.shape:
            raise TrainingStepError(
                f"gradient shape {grad.shape} does not match parameter {name!r} "
                f"shape {params[name].data.shape}"
            )

    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        grad = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        param.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
        param.data -= state.learning_rate * state.weight_decay * param.data
    return state
