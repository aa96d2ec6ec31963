"""Tracking metrics and fidelity measurement."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagtrack import delan
from lagtrack.errors import RejectedInputError
from lagtrack.harness.metrics import itae, model_fidelity, rmse
from lagtrack.plants import ArmPlant


def test_rmse_trivials():
    assert rmse(np.zeros(10), 0.1) == 0.0
    assert rmse(np.full(7, 3.0), 0.02) == pytest.approx(3.0)


def test_rmse_sine_analytic():
    dt = 1e-3
    n = int(round(2 * np.pi / dt))
    t = np.arange(n) * dt
    assert rmse(np.sin(t), dt) == pytest.approx(1 / np.sqrt(2), abs=1e-4)


def test_itae_trivials():
    assert itae(np.zeros(5), 0.1) == 0.0
    # constant |e| = c over [0, T]: integral t*c dt = c T^2 / 2, exact at midpoints
    c, dt, n = 2.5, 0.05, 400
    T = n * dt
    assert itae(np.full(n, c), dt) == pytest.approx(c * T**2 / 2, rel=1e-6)


def test_itae_later_burst_costs_more():
    early = np.zeros(100)
    early[10:20] = 1.0
    late = np.zeros(100)
    late[80:90] = 1.0
    assert itae(late, 0.1) > itae(early, 0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 50), st.integers(1, 30))
def test_itae_shift_monotone_property(n, shift):
    base = np.zeros(n + shift + 5)
    base[2] = 1.0
    shifted = np.roll(base, shift)
    assert itae(shifted, 0.02) > itae(base, 0.02)


def test_metric_quadrature_accuracy_at_control_rate():
    # smooth signal at dt = 1/48: errors <= 1e-4 relative vs analytic integrals
    dt = 1.0 / 48.0
    T = 20.0
    n = int(round(T / dt))
    t = np.arange(n) * dt
    e = 0.3 + 0.2 * np.sin(2 * np.pi * t / 5.0)
    # analytic: integral of e^2 and of t*|e| (e > 0 throughout)
    w = 2 * np.pi / 5.0
    int_e2 = 0.09 * T + 0.04 * (T / 2 - np.sin(2 * w * T) / (4 * w)) - 2 * 0.3 * 0.2 * (np.cos(w * T) - 1) / w
    rmse_true = np.sqrt(int_e2 / T)
    tm = (np.arange(n) + 0.5) * dt

    def e_of(tt):
        return 0.3 + 0.2 * np.sin(w * tt)

    # midpoint-rule reference at fine resolution for the t-weighted integral
    fine = np.linspace(0, T, 2_000_001)
    itae_true = np.trapezoid(fine * np.abs(e_of(fine)), fine)
    assert abs(rmse(e, dt) - rmse_true) / rmse_true <= 1e-4
    assert abs(itae(e, dt) - itae_true) / itae_true <= 1e-4


def test_empty_series_rejected():
    with pytest.raises(RejectedInputError):
        rmse(np.array([]), 0.1)
    with pytest.raises(RejectedInputError):
        itae(np.array([]), 0.1)


def test_model_fidelity_oracle_injection_is_zero():
    arm = ArmPlant()
    report = model_fidelity(arm.dynamics, arm, n_states=20, rng=0)
    assert report.d_err == 0.0 and report.c_err == 0.0 and report.g_err == 0.0


def test_model_fidelity_untrained_model_nonzero():
    arm = ArmPlant()
    model = delan.make_model(2, seed=3)
    report = model_fidelity(delan.estimator(model), arm, n_states=20, rng=0)
    assert report.d_err > 0.1 and report.g_err > 0.1


def test_model_fidelity_custom_box_deterministic():
    arm = ArmPlant()
    model = delan.make_model(2, seed=4)
    box = (np.full(2, -0.5), np.full(2, 0.5), np.full(2, -1.0), np.full(2, 1.0))
    a = model_fidelity(delan.estimator(model), arm, n_states=15, rng=9, box=box)
    b = model_fidelity(delan.estimator(model), arm, n_states=15, rng=9, box=box)
    assert a == b
