"""Gradient checking utilities used throughout the test suites."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import RejectedInputError
from . import autodiff as ad
from .network import NetworkSpec, ParameterVector, net_forward, net_forward_and_input_jacobian

__all__ = ["finite_diff_check", "loss_param_gradient"]


def finite_diff_check(f: Callable[[np.ndarray], float], x, analytic_grad, h: float = 1e-6) -> float:
    """Max relative error between central differences of ``f`` and a claimed gradient.

    Relative error per coordinate is |fd - g| / max(1, |g|); the max over
    coordinates is returned.
    """
    if h <= 0:
        raise RejectedInputError("finite-difference step h must be > 0")
    x = np.asarray(x, dtype=np.float64)
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64)
    worst = 0.0
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        fd = (float(f(x + step)) - float(f(x - step))) / (2.0 * h)
        g = analytic_grad.flat[i]
        worst = max(worst, abs(fd - g) / max(1.0, abs(g)))
    return worst


def _values_and_rebuild(params):
    """Flat values + a function wrapping a Var back into the params' kind."""
    if isinstance(params, ParameterVector):
        return np.asarray(params.values, dtype=np.float64), lambda v: ParameterVector(v, params.layout)
    return np.asarray(params, dtype=np.float64), lambda v: v


def _locate_bad_batch_index(loss, params, batch) -> int | None:
    try:
        for i in range(len(batch)):
            if not np.isfinite(float(ad.value_of(loss(params, batch[i : i + 1])))):
                return i
    except Exception:
        return None
    return None


def loss_param_gradient(loss: Callable, params, batch) -> np.ndarray:
    """Gradient of a scalar loss with respect to every parameter entry.

    ``loss(params, batch)`` may internally call net_forward and
    net_input_jacobian; the nested input-derivatives are part of the tape,
    so the returned gradient is exact for them too.  ``params`` is a
    ParameterVector or flat ndarray.
    """
    from ..errors import TrainingDivergenceError

    values, rebuild = _values_and_rebuild(params)
    leaf = ad.Var(values)
    out = loss(rebuild(leaf), batch)
    out_value = float(ad.value_of(out))
    if not np.isfinite(out_value):
        index = _locate_bad_batch_index(loss, params, batch) if hasattr(batch, "__getitem__") else None
        raise TrainingDivergenceError(f"loss is non-finite ({out_value})", batch_index=index)
    if not isinstance(out, ad.Var):
        return np.zeros_like(values)  # loss ignored the parameters
    return ad.gradients(out, leaf)


def jacobian_check(spec: NetworkSpec, params: ParameterVector, x, h: float = 1e-6) -> float:
    """Max relative error of the analytic input Jacobian vs central differences."""
    x = np.asarray(x, dtype=np.float64)
    _, jac = net_forward_and_input_jacobian(spec, params, x)
    jac = ad.value_of(jac)
    worst = 0.0
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = h
        fd = (net_forward(spec, params, x + step) - net_forward(spec, params, x - step)) / (2.0 * h)
        err = np.abs(fd - jac[:, j]) / np.maximum(1.0, np.abs(jac[:, j]))
        worst = max(worst, float(err.max()))
    return worst
