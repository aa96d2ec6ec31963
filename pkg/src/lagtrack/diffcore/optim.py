"""Adam optimizer over flat parameter vectors, as pure functions."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import DimensionMismatchError
from .network import ParameterVector

__all__ = ["OptimizerState", "adam_step"]


@dataclass(frozen=True)
class OptimizerState:
    """Adam moments and hyperparameters for one flat parameter vector."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n_params: int, learning_rate: float = 1e-3, **kwargs) -> "OptimizerState":
        return cls(
            first_moment=np.zeros(n_params),
            second_moment=np.zeros(n_params),
            learning_rate=learning_rate,
            **kwargs,
        )


def adam_step(state: OptimizerState, params, grad):
    """One bias-corrected Adam update.  Returns (params', state').

    ``params`` may be a ParameterVector or a plain ndarray; the same kind
    is returned.
    """
    vec = params.values if isinstance(params, ParameterVector) else np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if vec.shape != grad.shape or vec.shape != state.first_moment.shape:
        raise DimensionMismatchError(
            f"params {vec.shape}, grad {grad.shape}, moments {state.first_moment.shape} must agree"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_vec = vec - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = replace(state, first_moment=m, second_moment=v, step_count=t)
    if isinstance(params, ParameterVector):
        return ParameterVector(new_vec, params.layout), new_state
    return new_vec, new_state
