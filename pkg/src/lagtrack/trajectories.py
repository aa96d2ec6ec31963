"""Reference trajectory generators (q_d, qd_d, qdd_d) for the experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInputError

__all__ = [
    "TrajectoryConfig",
    "ReferenceSample",
    "sample",
    "arm_sine",
    "arm_quintic",
    "quad_step",
    "quad_sine_yaw",
    "KINDS",
]

KINDS = ("sine", "quintic", "step", "sine_linear_yaw")


@dataclass(frozen=True)
class ReferenceSample:
    """Desired position, velocity, acceleration at one instant."""

    q_d: np.ndarray
    qd_d: np.ndarray
    qdd_d: np.ndarray


@dataclass(frozen=True)
class TrajectoryConfig:
    """Shape parameters for one reference trajectory.

    kind selects the closed form:
      sine            q_d,i = amplitude sin(2 pi t / period + phase_i)
      quintic         minimum-jerk move start -> target over settle_time,
                      constant afterwards
      step            q_d = start before settle_time, target at/after it,
                      with qd_d = qdd_d = 0 everywhere
      sine_linear_yaw roll/pitch sinusoidal, yaw = yaw_rate * t (3 DOF)
    """

    kind: str
    dof: int
    amplitude: float = 0.5
    period: float = 4.0
    phase: tuple[float, ...] = ()
    start: tuple[float, ...] = ()
    target: tuple[float, ...] = ()
    settle_time: float = 3.0
    duration: float = 20.0
    yaw_rate: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RejectedInputError(f"unknown trajectory kind {self.kind!r}; known: {KINDS}")
        if self.dof < 1:
            raise RejectedInputError("dof must be >= 1")
        if self.period <= 0:
            raise RejectedInputError("period must be > 0")
        if self.kind in ("quintic", "step") and not (0 < self.settle_time <= self.duration):
            raise RejectedInputError("settle_time must lie in (0, duration]")
        object.__setattr__(self, "phase", _fill(self.phase, self.dof))
        object.__setattr__(self, "start", _fill(self.start, self.dof))
        object.__setattr__(self, "target", _fill(self.target, self.dof))
        if self.kind == "sine_linear_yaw" and self.dof != 3:
            raise RejectedInputError("sine_linear_yaw is a 3-DOF attitude trajectory")


def _fill(values, n: int) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if not values:
        return (0.0,) * n
    if len(values) != n:
        raise RejectedInputError(f"per-channel tuple has {len(values)} entries, expected {n}")
    return values


def sample(cfg: TrajectoryConfig, t: float) -> ReferenceSample:
    """Reference state at time t in [0, duration]."""
    if not (0.0 <= t <= cfg.duration):
        raise RejectedInputError(f"t = {t} outside [0, {cfg.duration}]")
    if cfg.kind == "sine":
        return _sine(cfg, t)
    if cfg.kind == "quintic":
        return _quintic(cfg, t)
    if cfg.kind == "step":
        return _step(cfg, t)
    return _sine_linear_yaw(cfg, t)


def _sine(cfg: TrajectoryConfig, t: float) -> ReferenceSample:
    w = 2 * np.pi / cfg.period
    phase = np.asarray(cfg.phase)
    arg = w * t + phase
    return ReferenceSample(
        q_d=cfg.amplitude * np.sin(arg),
        qd_d=cfg.amplitude * w * np.cos(arg),
        qdd_d=-cfg.amplitude * w * w * np.sin(arg),
    )


def _quintic(cfg: TrajectoryConfig, t: float) -> ReferenceSample:
    start = np.asarray(cfg.start)
    target = np.asarray(cfg.target)
    if t >= cfg.settle_time:
        z = np.zeros(cfg.dof)
        return ReferenceSample(target.copy(), z, z.copy())
    tau = t / cfg.settle_time
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    sd = (30 * tau**2 - 60 * tau**3 + 30 * tau**4) / cfg.settle_time
    sdd = (60 * tau - 180 * tau**2 + 120 * tau**3) / cfg.settle_time**2
    span = target - start
    return ReferenceSample(start + span * s, span * sd, span * sdd)


def _step(cfg: TrajectoryConfig, t: float) -> ReferenceSample:
    level = np.asarray(cfg.start) if t < cfg.settle_time else np.asarray(cfg.target)
    z = np.zeros(cfg.dof)
    return ReferenceSample(level.copy(), z, z.copy())


def _sine_linear_yaw(cfg: TrajectoryConfig, t: float) -> ReferenceSample:
    w = 2 * np.pi / cfg.period
    phase = np.asarray(cfg.phase)[:2]
    arg = w * t + phase
    q = np.concatenate([cfg.amplitude * np.sin(arg), [cfg.yaw_rate * t]])
    qd = np.concatenate([cfg.amplitude * w * np.cos(arg), [cfg.yaw_rate]])
    qdd = np.concatenate([-cfg.amplitude * w * w * np.sin(arg), [0.0]])
    return ReferenceSample(q, qd, qdd)


# ---- experiment defaults ---------------------------------------------------------


def arm_sine(duration: float = 20.0) -> TrajectoryConfig:
    return TrajectoryConfig(
        kind="sine", dof=2, amplitude=0.5, period=4.0, phase=(0.0, np.pi / 2), duration=duration
    )


def arm_quintic(duration: float = 20.0) -> TrajectoryConfig:
    return TrajectoryConfig(
        kind="quintic", dof=2, target=(0.5, -0.5), settle_time=3.0, duration=duration
    )


def quad_step(duration: float = 20.0) -> TrajectoryConfig:
    return TrajectoryConfig(
        kind="step", dof=3, target=(0.1, -0.1, 0.0), settle_time=2.0, duration=duration
    )


def quad_sine_yaw(duration: float = 20.0) -> TrajectoryConfig:
    return TrajectoryConfig(
        kind="sine_linear_yaw",
        dof=3,
        amplitude=0.1,
        period=4.0,
        phase=(0.0, np.pi / 2, 0.0),
        yaw_rate=0.1,
        duration=duration,
    )
