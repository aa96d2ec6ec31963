"""Tracking metrics and model-fidelity measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RejectedInputError

__all__ = ["MetricReport", "FidelityReport", "rmse", "itae", "model_fidelity", "state_box_for"]


@dataclass(frozen=True)
class MetricReport:
    """Summary of one evaluation episode."""

    rmse: float
    itae: float
    samples_used: int
    wall_clock: float
    divergence_flag: bool = False


@dataclass(frozen=True)
class FidelityReport:
    """Mean Frobenius errors of the learned matrices against the plant."""

    d_err: float
    c_err: float
    g_err: float


def rmse(errors, dt_ctrl: float) -> float:
    """sqrt((1/T) sum e_i^2 dt) with T = N dt (rectangle rule)."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise RejectedInputError("error series must be non-empty")
    if dt_ctrl <= 0:
        raise RejectedInputError("dt_ctrl must be > 0")
    return float(np.sqrt(np.mean(errors**2)))


def itae(errors, dt_ctrl: float) -> float:
    """sum t_i |e_i| dt with midpoint times t_i = (i + 1/2) dt."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise RejectedInputError("error series must be non-empty")
    if dt_ctrl <= 0:
        raise RejectedInputError("dt_ctrl must be > 0")
    t = (np.arange(errors.size) + 0.5) * dt_ctrl
    return float(np.sum(t * np.abs(errors)) * dt_ctrl)


def state_box_for(plant) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Default (q_lo, q_hi, qd_lo, qd_hi) bounding box per plant kind."""
    if plant.n == 2:
        return (np.full(2, -1.0), np.full(2, 1.0), np.full(2, -2.0), np.full(2, 2.0))
    return (
        np.array([-0.25, -0.25, -2.0]),
        np.array([0.25, 0.25, 2.0]),
        np.full(3, -1.5),
        np.full(3, 1.5),
    )


def model_fidelity(estimate, plant, n_states: int = 200, rng=None, box=None) -> FidelityReport:
    """Mean Frobenius errors of (D, C, G) over random states in a box.

    ``estimate`` maps (q, qd) to a DynamicsTriple (a learned model's
    estimator, or another plant's dynamics for oracle-injection tests).
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    q_lo, q_hi, qd_lo, qd_hi = box if box is not None else state_box_for(plant)
    d_err = c_err = g_err = 0.0
    for _ in range(n_states):
        q = rng.uniform(q_lo, q_hi)
        qd = rng.uniform(qd_lo, qd_hi)
        true = plant.dynamics(q, qd)
        est = estimate(q, qd)
        d_err += np.linalg.norm(true.d - est.d)
        c_err += np.linalg.norm(true.c - est.c)
        g_err += np.linalg.norm(true.g - est.g)
    return FidelityReport(d_err / n_states, c_err / n_states, g_err / n_states)
