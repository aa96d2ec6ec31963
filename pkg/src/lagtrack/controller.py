"""Tracking controllers: the sliding-variable law with integral
compensation and leakage, plus a PID baseline.

The main control law combines feedforward from a dynamics estimate with
feedback on the composite sliding variable s = (qd_d - qd) + slide_gain
(q_d - q):

    u = D_hat qdd_r + C_hat qd_r + G_hat + d_hat + damp_gain s

where d_hat integrates comp_weight^{-1} s over time to soak up the model
error, decaying at a leak rate alpha(t) = leak_rate exp(-t / leak_tau)
that protects the loop while the estimate is still poor.  The associated
energy certificate V = 0.5 s^T D_hat s + 0.5 z^T A z (z = d_hat - true
model error) is evaluated per step for instrumentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .delan import DynamicsTriple
from .errors import DimensionMismatchError, RejectedInputError, UnstableLeakageError
from .plants import PlantState
from .trajectories import ReferenceSample

__all__ = [
    "ControllerGains",
    "CompensatorState",
    "SlidingState",
    "LyapunovRecord",
    "PidGains",
    "PidState",
    "sliding_vars",
    "compensator_update",
    "leak_rate_at",
    "control_law",
    "model_error",
    "lyapunov_eval",
    "pid_control",
    "TrackingController",
    "PidController",
    "StepTelemetry",
]


def _check_spd(name: str, mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatchError(f"{name} must be a square matrix, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, rtol=1e-12, atol=1e-14):
        raise RejectedInputError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise RejectedInputError(f"{name} must be positive definite") from exc
    return mat


@dataclass(frozen=True)
class ControllerGains:
    """Positive-definite gain matrices plus the leakage schedule."""

    slide_gain: np.ndarray  # position-error weighting in the sliding variable, 1/s
    comp_weight: np.ndarray  # integral compensation weighting (enters inverted)
    damp_gain: np.ndarray  # feedback on the sliding variable
    leak_rate: float = 1.0  # initial compensator decay, 1/s
    leak_tau: float = 10.0  # e-folding time of the decay schedule, s

    def __post_init__(self):
        object.__setattr__(self, "slide_gain", _check_spd("slide_gain", self.slide_gain))
        object.__setattr__(self, "comp_weight", _check_spd("comp_weight", self.comp_weight))
        object.__setattr__(self, "damp_gain", _check_spd("damp_gain", self.damp_gain))
        if self.leak_rate < 0:
            raise RejectedInputError("leak_rate must be >= 0")
        if self.leak_tau <= 0:
            raise RejectedInputError("leak_tau must be > 0")

    @classmethod
    def diag(cls, n: int, slide: float = 5.0, comp: float = 10.0, damp: float = 5.0,
             leak_rate: float = 1.0, leak_tau: float = 10.0) -> "ControllerGains":
        eye = np.eye(n)
        return cls(slide * eye, comp * eye, damp * eye, leak_rate, leak_tau)


@dataclass(frozen=True)
class CompensatorState:
    """Integral model-error estimate and its clock."""

    d_hat: np.ndarray
    t: float = 0.0

    @classmethod
    def zero(cls, n: int) -> "CompensatorState":
        return cls(np.zeros(n), 0.0)


@dataclass(frozen=True)
class SlidingState:
    """Position error, reference velocity/acceleration, sliding variable."""

    q_err: np.ndarray
    qd_ref: np.ndarray
    qdd_ref: np.ndarray
    s: np.ndarray


@dataclass
class LyapunovRecord:
    """Certificate value and its predicted/measured rates at one step."""

    v: float
    vdot_predicted: float
    vdot_measured: float = np.nan


def sliding_vars(gains: ControllerGains, state: PlantState, ref: ReferenceSample) -> SlidingState:
    """q_err = q_d - q; qd_ref = qd_d + slide_gain q_err; s = qd_ref - qd."""
    q_err = ref.q_d - state.q
    qd_ref = ref.qd_d + gains.slide_gain @ q_err
    qdd_ref = ref.qdd_d + gains.slide_gain @ (ref.qd_d - state.qd)
    s = qd_ref - state.qd
    return SlidingState(q_err=q_err, qd_ref=qd_ref, qdd_ref=qdd_ref, s=s)


def leak_rate_at(gains: ControllerGains, t: float) -> float:
    return gains.leak_rate * np.exp(-t / gains.leak_tau)


def compensator_update(comp: CompensatorState, gains: ControllerGains, s, dt_ctrl: float) -> CompensatorState:
    """Explicit-Euler step of d_hat' = -alpha(t) d_hat + comp_weight^{-1} s.

    With leak_rate = 0 this is exactly the Riemann sum of the pure
    integral compensator.
    """
    if dt_ctrl <= 0:
        raise RejectedInputError("dt_ctrl must be > 0")
    alpha = leak_rate_at(gains, comp.t)
    d_hat = (1.0 - alpha * dt_ctrl) * comp.d_hat + dt_ctrl * np.linalg.solve(gains.comp_weight, np.asarray(s, dtype=float))
    return CompensatorState(d_hat=d_hat, t=comp.t + dt_ctrl)


def control_law(est: DynamicsTriple, gains: ControllerGains, sliding: SlidingState, comp: CompensatorState) -> np.ndarray:
    """Feedforward from the estimate plus compensation and sliding feedback.

    Saturation to actuator limits is the caller's responsibility.
    """
    return (
        est.d @ sliding.qdd_ref
        + est.c @ sliding.qd_ref
        + est.g
        + comp.d_hat
        + gains.damp_gain @ sliding.s
    )


def model_error(true_triple: DynamicsTriple, est_triple: DynamicsTriple, qd, qdd) -> np.ndarray:
    """Lumped error d = (D - D_hat) qdd + (C - C_hat) qd + (G - G_hat).

    A simulation-only diagnostic: the true triple is unavailable on real
    hardware.
    """
    qd = np.asarray(qd, dtype=float)
    qdd = np.asarray(qdd, dtype=float)
    return (
        (true_triple.d - est_triple.d) @ qdd
        + (true_triple.c - est_triple.c) @ qd
        + (true_triple.g - est_triple.g)
    )


def lyapunov_eval(inertia_est: np.ndarray, gains: ControllerGains, s, z, t: float = 0.0) -> LyapunovRecord:
    """V = 0.5 s^T D_hat s + 0.5 z^T A z and its predicted rate.

    The predicted rate is -s^T damp_gain s - alpha(t) z^T comp_weight z;
    the measured rate is filled in afterwards from consecutive V values.
    """
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    v = 0.5 * float(s @ inertia_est @ s) + 0.5 * float(z @ gains.comp_weight @ z)
    vdot_pred = -float(s @ gains.damp_gain @ s) - leak_rate_at(gains, t) * float(z @ gains.comp_weight @ z)
    return LyapunovRecord(v=v, vdot_predicted=vdot_pred)


# ---- estimator-driven controller with telemetry -----------------------------------


@dataclass
class StepTelemetry:
    """Everything the harness wants to log about one control decision."""

    sliding: SlidingState
    d_hat: np.ndarray
    est: DynamicsTriple
    u_raw: np.ndarray
    u: np.ndarray
    saturated: bool


class TrackingController:
    """Stateful wrapper: estimate -> sliding law -> compensator update.

    ``estimator`` maps (q, qd) to a DynamicsTriple; pass a learned model's
    estimator for data-driven control or plant.dynamics for the exact-model
    reference runs.
    """

    def __init__(
        self,
        estimator: Callable[[np.ndarray, np.ndarray], DynamicsTriple],
        gains: ControllerGains,
        n: int,
        dt_ctrl: float,
        torque_limit: np.ndarray | None = None,
        use_compensator: bool = True,
    ):
        if gains.leak_rate * dt_ctrl >= 1.0:
            raise UnstableLeakageError(
                f"leak_rate {gains.leak_rate}/s at dt_ctrl {dt_ctrl}s would overshoot zero"
            )
        self.estimator = estimator
        self.gains = gains
        self.n = n
        self.dt_ctrl = dt_ctrl
        self.torque_limit = None if torque_limit is None else np.asarray(torque_limit, dtype=float)
        self.use_compensator = use_compensator
        self.comp = CompensatorState.zero(n)

    def reset(self) -> None:
        self.comp = CompensatorState.zero(self.n)

    def command(self, state: PlantState, ref: ReferenceSample) -> tuple[np.ndarray, StepTelemetry]:
        est = self.estimator(state.q, state.qd)
        sliding = sliding_vars(self.gains, state, ref)
        u_raw = control_law(est, self.gains, sliding, self.comp)
        u = u_raw if self.torque_limit is None else np.clip(u_raw, -self.torque_limit, self.torque_limit)
        saturated = bool(np.any(u != u_raw))
        telemetry = StepTelemetry(
            sliding=sliding, d_hat=self.comp.d_hat.copy(), est=est, u_raw=u_raw, u=u, saturated=saturated
        )
        if self.use_compensator:
            self.comp = compensator_update(self.comp, self.gains, sliding.s, self.dt_ctrl)
        else:
            self.comp = replace(self.comp, t=self.comp.t + self.dt_ctrl)
        return u, telemetry


# ---- PID baseline ---------------------------------------------------------------


@dataclass(frozen=True)
class PidGains:
    """Per-channel parallel PID with an anti-windup clamp on the integral."""

    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    integral_clamp: np.ndarray | None = None

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if np.any(arr < 0):
                raise RejectedInputError(f"{name} entries must be >= 0")
        if self.integral_clamp is not None:
            clamp = np.asarray(self.integral_clamp, dtype=np.float64)
            object.__setattr__(self, "integral_clamp", clamp)
            if np.any(clamp < 0):
                raise RejectedInputError("integral_clamp entries must be >= 0")

    @classmethod
    def with_default_clamp(cls, kp, ki, kd, torque_limit) -> "PidGains":
        # clamp the integral contribution near 10x the torque limit
        ki_arr = np.asarray(ki, dtype=float)
        limit = np.asarray(torque_limit, dtype=float)
        clamp = np.where(ki_arr > 0, 10.0 * limit / np.maximum(ki_arr, 1e-12), np.inf)
        return cls(kp, ki, kd, clamp)


@dataclass(frozen=True)
class PidState:
    integral: np.ndarray

    @classmethod
    def zero(cls, n: int) -> "PidState":
        return cls(np.zeros(n))


def pid_control(
    gains: PidGains, state: PlantState, ref: ReferenceSample, integral_state: PidState, dt_ctrl: float
) -> tuple[np.ndarray, PidState]:
    """u_i = kp_i e_i + ki_i clamp(int e_i dt) + kd_i (qd_d - qd)_i."""
    err = ref.q_d - state.q
    derr = ref.qd_d - state.qd
    integral = integral_state.integral + err * dt_ctrl
    if gains.integral_clamp is not None:
        integral = np.clip(integral, -gains.integral_clamp, gains.integral_clamp)
    u = gains.kp * err + gains.ki * integral + gains.kd * derr
    return u, PidState(integral)


class PidController:
    """Stateful PID with the same command interface as TrackingController."""

    def __init__(self, gains: PidGains, n: int, dt_ctrl: float, torque_limit: np.ndarray | None = None):
        self.gains = gains
        self.n = n
        self.dt_ctrl = dt_ctrl
        self.torque_limit = None if torque_limit is None else np.asarray(torque_limit, dtype=float)
        self.state = PidState.zero(n)

    def reset(self) -> None:
        self.state = PidState.zero(self.n)

    def command(self, state: PlantState, ref: ReferenceSample) -> tuple[np.ndarray, None]:
        u, self.state = pid_control(self.gains, state, ref, self.state, self.dt_ctrl)
        if self.torque_limit is not None:
            u = np.clip(u, -self.torque_limit, self.torque_limit)
        return u, None
