"""Reference generators: closed forms and derivative consistency."""

import numpy as np
import pytest

from lagtrack.errors import RejectedInputError
from lagtrack.trajectories import (
    TrajectoryConfig,
    arm_quintic,
    arm_sine,
    quad_sine_yaw,
    quad_step,
    sample,
)


def fd_consistency(cfg, times, h=1e-4, tol=1e-6):
    """Central differences of q_d reproduce qd_d and qdd_d."""
    for t in times:
        if t - h < 0 or t + h > cfg.duration:
            continue
        ref = sample(cfg, t)
        plus, minus = sample(cfg, t + h), sample(cfg, t - h)
        vel_fd = (plus.q_d - minus.q_d) / (2 * h)
        acc_fd = (plus.q_d - 2 * ref.q_d + minus.q_d) / h**2
        assert np.max(np.abs(vel_fd - ref.qd_d)) <= tol
        assert np.max(np.abs(acc_fd - ref.qdd_d)) <= tol


@pytest.mark.parametrize(
    "cfg", [arm_sine(), arm_quintic(), quad_sine_yaw()], ids=["sine", "quintic", "sine_linear_yaw"]
)
def test_smooth_kinds_derivative_consistent_on_grid(cfg):
    times = np.linspace(0.0, cfg.duration, 1000)
    # quintic has a C^2 joint at settle_time: skip the single straddling point
    if cfg.kind == "quintic":
        times = times[np.abs(times - cfg.settle_time) > 1e-3]
    fd_consistency(cfg, times)


def test_sine_harmonic_identity():
    cfg = TrajectoryConfig(kind="sine", dof=2, amplitude=0.5, period=4.0)
    w = 2 * np.pi / cfg.period
    for t in (0.0, 0.7, 1.9, 3.3):
        ref = sample(cfg, t)
        np.testing.assert_allclose(ref.qdd_d, -(w**2) * ref.q_d, rtol=1e-12, atol=1e-15)


def test_quintic_boundary_conditions_exact():
    cfg = arm_quintic()
    start = sample(cfg, 0.0)
    np.testing.assert_array_equal(start.q_d, np.zeros(2))
    np.testing.assert_array_equal(start.qd_d, np.zeros(2))
    np.testing.assert_array_equal(start.qdd_d, np.zeros(2))
    for t in (cfg.settle_time, cfg.settle_time + 2.0, cfg.duration):
        ref = sample(cfg, t)
        assert np.linalg.norm(ref.q_d - np.asarray(cfg.target)) <= 1e-12
        np.testing.assert_array_equal(ref.qd_d, np.zeros(2))
        np.testing.assert_array_equal(ref.qdd_d, np.zeros(2))


def test_step_is_piecewise_constant_with_zero_derivatives():
    cfg = quad_step()
    before = sample(cfg, cfg.settle_time - 0.01)
    after = sample(cfg, cfg.settle_time)
    np.testing.assert_array_equal(before.q_d, np.zeros(3))
    np.testing.assert_array_equal(after.q_d, [0.1, -0.1, 0.0])
    for ref in (before, after):
        np.testing.assert_array_equal(ref.qd_d, np.zeros(3))
        np.testing.assert_array_equal(ref.qdd_d, np.zeros(3))


def test_sine_linear_yaw_structure():
    cfg = quad_sine_yaw()
    ref = sample(cfg, 5.0)
    assert ref.q_d[2] == pytest.approx(0.5)  # 0.1 rad/s * 5 s
    assert ref.qd_d[2] == pytest.approx(cfg.yaw_rate)
    assert ref.qdd_d[2] == 0.0
    assert np.max(np.abs(ref.q_d[:2])) <= cfg.amplitude + 1e-12


def test_time_out_of_range_rejected():
    cfg = arm_sine()
    with pytest.raises(RejectedInputError):
        sample(cfg, -0.1)
    with pytest.raises(RejectedInputError):
        sample(cfg, cfg.duration + 0.1)


def test_config_validation():
    with pytest.raises(RejectedInputError):
        TrajectoryConfig(kind="spline", dof=2)
    with pytest.raises(RejectedInputError):
        TrajectoryConfig(kind="sine", dof=2, period=0.0)
    with pytest.raises(RejectedInputError):
        TrajectoryConfig(kind="quintic", dof=2, settle_time=25.0, duration=20.0)
    with pytest.raises(RejectedInputError):
        TrajectoryConfig(kind="sine", dof=2, phase=(0.0, 1.0, 2.0))
    with pytest.raises(RejectedInputError):
        TrajectoryConfig(kind="sine_linear_yaw", dof=2)
