"""Controller algebra: sliding variables, compensator, control law, PID."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagtrack.controller import (
    CompensatorState,
    ControllerGains,
    PidController,
    PidGains,
    PidState,
    TrackingController,
    compensator_update,
    control_law,
    leak_rate_at,
    lyapunov_eval,
    model_error,
    pid_control,
    sliding_vars,
)
from lagtrack.delan import DynamicsTriple
from lagtrack.errors import RejectedInputError, UnstableLeakageError
from lagtrack.plants import ArmPlant, PlantState
from lagtrack.trajectories import ReferenceSample

GAINS = ControllerGains.diag(2)


def ref_of(q_d, qd_d=None, qdd_d=None):
    n = len(q_d)
    return ReferenceSample(
        np.asarray(q_d, float),
        np.zeros(n) if qd_d is None else np.asarray(qd_d, float),
        np.zeros(n) if qdd_d is None else np.asarray(qdd_d, float),
    )


# ---- sliding variables -------------------------------------------------------


def test_sliding_perfect_tracking():
    state = PlantState(np.array([0.1, 0.2]), np.array([0.3, 0.4]))
    ref = ref_of([0.1, 0.2], [0.3, 0.4], [1.0, -1.0])
    sl = sliding_vars(GAINS, state, ref)
    np.testing.assert_array_equal(sl.s, np.zeros(2))
    np.testing.assert_array_equal(sl.qdd_ref, ref.qdd_d)


def test_sliding_unit_gain_case():
    gains = ControllerGains.diag(2, slide=1.0)
    state = PlantState(np.array([0.0, 0.0]), np.zeros(2))
    ref = ref_of([0.1, 0.0])
    sl = sliding_vars(gains, state, ref)
    np.testing.assert_allclose(sl.s, [0.1, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=8, max_size=8))
def test_sliding_identity_property(vals):
    q, qd, qdes, qddes = (np.array(vals[i : i + 2]) for i in range(0, 8, 2))
    state = PlantState(q, qd)
    ref = ref_of(qdes, qddes)
    sl = sliding_vars(GAINS, state, ref)
    expected = (ref.qd_d - qd) + GAINS.slide_gain @ (ref.q_d - q)
    assert np.max(np.abs(sl.s - expected)) <= 1e-14 * max(1.0, float(np.max(np.abs(expected))))


# ---- compensator ---------------------------------------------------------------


def test_compensator_noop_when_idle():
    gains = ControllerGains.diag(2, leak_rate=0.0)
    comp = CompensatorState(np.array([0.5, -0.5]), t=1.0)
    out = compensator_update(comp, gains, np.zeros(2), 0.1)
    np.testing.assert_array_equal(out.d_hat, comp.d_hat)
    assert out.t == pytest.approx(1.1)


def test_compensator_single_euler_step():
    gains = ControllerGains.diag(2, comp=2.0, leak_rate=0.0)
    comp = CompensatorState.zero(2)
    out = compensator_update(comp, gains, np.array([1.0, 0.0]), 0.1)
    np.testing.assert_allclose(out.d_hat, [0.05, 0.0], rtol=1e-15)


def test_compensator_riemann_sum_exact():
    gains = ControllerGains.diag(2, comp=4.0, leak_rate=0.0)
    comp = CompensatorState.zero(2)
    s = np.array([0.8, -0.4])
    dt = 1.0 / 48.0
    for _ in range(100):
        comp = compensator_update(comp, gains, s, dt)
    expected = 100 * dt * np.linalg.solve(gains.comp_weight, s)
    np.testing.assert_allclose(comp.d_hat, expected, rtol=1e-12)


def test_leak_rate_schedule_decays():
    gains = ControllerGains.diag(2, leak_rate=1.0, leak_tau=10.0)
    assert leak_rate_at(gains, 0.0) == 1.0
    assert leak_rate_at(gains, 10.0) == pytest.approx(np.exp(-1.0))
    comp = CompensatorState(np.array([1.0, 0.0]), t=0.0)
    out = compensator_update(comp, gains, np.zeros(2), 0.01)
    np.testing.assert_allclose(out.d_hat, [0.99, 0.0])  # leaks toward zero


def test_unstable_leakage_rejected_at_construction():
    gains = ControllerGains.diag(2, leak_rate=100.0)
    arm = ArmPlant()
    with pytest.raises(UnstableLeakageError):
        TrackingController(arm.dynamics, gains, 2, dt_ctrl=arm.params.dt_ctrl)


# ---- control law ----------------------------------------------------------------


def rand_triple(rng, n=2):
    a = rng.normal(size=(n, n))
    return DynamicsTriple(a @ a.T + np.eye(n), rng.normal(size=(n, n)), rng.normal(size=n))


def test_control_law_pure_feedforward():
    rng = np.random.default_rng(0)
    est = rand_triple(rng)
    ref = ref_of([0.0, 0.0], [0.2, -0.1], [1.0, 0.5])
    state = PlantState(ref.q_d, ref.qd_d)
    sl = sliding_vars(GAINS, state, ref)
    u = control_law(est, GAINS, sl, CompensatorState.zero(2))
    np.testing.assert_allclose(u, est.d @ ref.qdd_d + est.c @ ref.qd_d + est.g, rtol=1e-14)


def test_control_law_linear_in_compensator_and_sliding():
    rng = np.random.default_rng(1)
    est = rand_triple(rng)
    state = PlantState(rng.normal(size=2), rng.normal(size=2))
    ref = ref_of(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
    sl = sliding_vars(GAINS, state, ref)
    base = control_law(est, GAINS, sl, CompensatorState.zero(2))
    d1 = np.array([0.3, -0.7])
    d2 = np.array([-0.2, 0.5])
    u1 = control_law(est, GAINS, sl, CompensatorState(d1))
    u2 = control_law(est, GAINS, sl, CompensatorState(d2))
    u12 = control_law(est, GAINS, sl, CompensatorState(d1 + d2))
    np.testing.assert_allclose(u12 - base, (u1 - base) + (u2 - base), atol=1e-12)


# ---- model error -------------------------------------------------------------------


def test_model_error_exact_estimate_is_zero():
    rng = np.random.default_rng(2)
    t = rand_triple(rng)
    np.testing.assert_array_equal(model_error(t, t, rng.normal(size=2), rng.normal(size=2)), np.zeros(2))


def test_model_error_identity_case():
    true = DynamicsTriple(2 * np.eye(2), np.zeros((2, 2)), np.zeros(2))
    est = DynamicsTriple(np.eye(2), np.zeros((2, 2)), np.zeros(2))
    np.testing.assert_array_equal(model_error(true, est, np.zeros(2), np.array([1.0, 2.0])), [1.0, 2.0])


def test_model_error_matches_torque_difference():
    rng = np.random.default_rng(3)
    true, est = rand_triple(rng), rand_triple(rng)
    qd, qdd = rng.normal(size=2), rng.normal(size=2)
    u_true = true.d @ qdd + true.c @ qd + true.g
    u_est = est.d @ qdd + est.c @ qd + est.g
    np.testing.assert_allclose(model_error(true, est, qd, qdd), u_true - u_est, atol=1e-10)


# ---- certificate ---------------------------------------------------------------------


def test_lyapunov_trivial_cases():
    rec = lyapunov_eval(2 * np.eye(2), GAINS, np.zeros(2), np.zeros(2))
    assert rec.v == 0.0
    rec = lyapunov_eval(2 * np.eye(2), ControllerGains.diag(2, comp=1.0), np.array([1.0, 0.0]), np.array([0.0, 2.0]))
    assert rec.v == pytest.approx(3.0)


def test_lyapunov_eigenvalue_lower_bound():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a = rng.normal(size=(2, 2))
        d_hat = a @ a.T + 0.1 * np.eye(2)
        s = rng.normal(size=2)
        rec = lyapunov_eval(d_hat, GAINS, s, np.zeros(2))
        assert 2 * rec.v >= np.linalg.eigvalsh(d_hat).min() * (s @ s) - 1e-12
        assert rec.v >= 0.0


def test_lyapunov_predicted_rate():
    gains = ControllerGains.diag(2, damp=3.0, comp=2.0, leak_rate=0.5, leak_tau=10.0)
    s = np.array([1.0, -1.0])
    z = np.array([0.5, 0.5])
    rec = lyapunov_eval(np.eye(2), gains, s, z, t=0.0)
    assert rec.vdot_predicted == pytest.approx(-3.0 * (s @ s) - 0.5 * 2.0 * (z @ z))
    assert np.isnan(rec.vdot_measured)


# ---- PID -----------------------------------------------------------------------------


def test_pid_zero_error_zero_output():
    gains = PidGains(np.array([10.0, 10.0]), np.array([1.0, 1.0]), np.array([2.0, 2.0]))
    state = PlantState(np.array([0.4, -0.4]), np.array([0.1, 0.1]))
    ref = ref_of([0.4, -0.4], [0.1, 0.1])
    pid_state = PidState.zero(2)
    for _ in range(5):
        u, pid_state = pid_control(gains, state, ref, pid_state, 0.02)
        np.testing.assert_array_equal(u, np.zeros(2))


def test_pid_proportional_only():
    gains = PidGains(np.array([10.0, 10.0]), np.zeros(2), np.zeros(2))
    state = PlantState(np.array([0.0, 0.0]), np.zeros(2))
    u, _ = pid_control(gains, state, ref_of([0.1, 0.0]), PidState.zero(2), 0.02)
    np.testing.assert_allclose(u, [1.0, 0.0])


def test_pid_integral_clamp():
    gains = PidGains(np.zeros(2), np.array([1.0, 1.0]), np.zeros(2), integral_clamp=np.array([0.05, 0.05]))
    state = PlantState(np.zeros(2), np.zeros(2))
    ref = ref_of([1.0, 1.0])
    pid_state = PidState.zero(2)
    for _ in range(100):
        u, pid_state = pid_control(gains, state, ref, pid_state, 0.1)
    np.testing.assert_allclose(u, [0.05, 0.05])


def test_pid_gain_validation():
    with pytest.raises(RejectedInputError):
        PidGains(np.array([-1.0, 0.0]), np.zeros(2), np.zeros(2))


def test_gains_validation():
    with pytest.raises(RejectedInputError):
        ControllerGains(-np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(RejectedInputError):
        ControllerGains(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2), np.eye(2))


def test_tracking_controller_reset_and_saturation():
    arm = ArmPlant()
    ctrl = TrackingController(arm.dynamics, GAINS, 2, arm.params.dt_ctrl, torque_limit=np.array([0.1, 0.1]))
    state = PlantState(np.array([1.0, 1.0]), np.zeros(2))
    u, tel = ctrl.command(state, ref_of([0.0, 0.0]))
    assert tel.saturated and np.max(np.abs(u)) <= 0.1
    assert ctrl.comp.t > 0
    ctrl.reset()
    assert ctrl.comp.t == 0.0
    np.testing.assert_array_equal(ctrl.comp.d_hat, np.zeros(2))


def test_pid_controller_interface():
    arm = ArmPlant()
    gains = PidGains.with_default_clamp(np.array([60.0, 60.0]), np.array([30.0, 30.0]), np.array([5.0, 5.0]), arm.torque_limit)
    ctrl = PidController(gains, 2, arm.params.dt_ctrl, torque_limit=arm.torque_limit)
    u, tel = ctrl.command(PlantState(np.zeros(2), np.zeros(2)), ref_of([0.1, 0.1]))
    assert tel is None
    assert u.shape == (2,)
