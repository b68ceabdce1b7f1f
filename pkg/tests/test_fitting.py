import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcfdt.dynamics import TimeSeries
from qcfdt.fitting import (
    DegenerateInputError,
    FitError,
    fit_gamma,
    fit_lorentzian,
    fit_window_end,
    levenberg_marquardt,
    lorentzian,
)
from qcfdt.spectral import SmoothedProfile


def synthetic_decay(gamma, free_value=1.0, avg=0.1, t_max=200.0, n=2000):
    t = np.linspace(0, t_max, n)
    y = free_value * np.exp(-2 * gamma * t) + avg * (1 - np.exp(-2 * gamma * t))
    return TimeSeries(t, y), TimeSeries(t, np.full(n, free_value))


def test_recovers_synthetic_gamma():
    measured, free = synthetic_decay(0.05)
    fit = fit_gamma(measured, free, 0.1)
    assert fit.parameters["gamma"] == pytest.approx(0.05, rel=1e-3)
    assert fit.converged
    assert fit.residual_rms < 1e-8


def test_recovers_gamma_with_oscillating_free_evolution():
    t = np.linspace(0, 150, 3000)
    free = 0.5 + 0.5 * np.cos(2.0 * t)
    y = free * np.exp(-2 * 0.03 * t) + 0.2 * (1 - np.exp(-2 * 0.03 * t))
    fit = fit_gamma(TimeSeries(t, y), TimeSeries(t, free), 0.2)
    assert fit.parameters["gamma"] == pytest.approx(0.03, rel=1e-6)


def test_flat_series_is_degenerate():
    t = np.linspace(0, 10, 100)
    flat = TimeSeries(t, np.full(100, 0.3))
    with pytest.raises(DegenerateInputError):
        fit_gamma(flat, flat, 0.3)


def test_free_equal_to_average_is_degenerate():
    t = np.linspace(0, 10, 100)
    with pytest.raises(DegenerateInputError):
        fit_gamma(TimeSeries(t, np.cos(t)), TimeSeries(t, np.full(100, 0.2)), 0.2)


def test_mismatched_grids_rejected():
    measured, free = synthetic_decay(0.05)
    with pytest.raises(ValueError):
        fit_gamma(measured, TimeSeries(free.times * 2, free.values), 0.1)
    with pytest.raises(ValueError):
        short = TimeSeries(measured.times[:20], measured.values[:20])
        fit_gamma(short, short, 0.1)


@pytest.mark.parametrize("scale", [0.1, 3.0, 250.0])
def test_gamma_invariant_under_observable_scale(scale):
    measured, free = synthetic_decay(0.04, free_value=0.8, avg=-0.2)
    base = fit_gamma(measured, free, -0.2).parameters["gamma"]
    scaled = fit_gamma(
        TimeSeries(measured.times, scale * measured.values),
        TimeSeries(free.times, scale * free.values),
        -0.2 * scale,
    ).parameters["gamma"]
    assert scaled == pytest.approx(base, rel=1e-9)


@pytest.mark.parametrize("unit", [0.01, 7.0, 1000.0])
def test_gamma_rescales_with_time_unit(unit):
    rng = np.random.default_rng(3)
    measured, free = synthetic_decay(0.04)
    noisy = measured.values + 1e-3 * rng.normal(size=len(measured))
    base = fit_gamma(TimeSeries(measured.times, noisy), free, 0.1).parameters["gamma"]
    t = measured.times * unit
    stretched = fit_gamma(TimeSeries(t, noisy), TimeSeries(t, free.values), 0.1).parameters["gamma"]
    assert stretched * unit == pytest.approx(base, rel=1e-9)


def test_fit_is_deterministic():
    rng = np.random.default_rng(11)
    measured, free = synthetic_decay(0.02)
    noisy = TimeSeries(measured.times, measured.values + 0.01 * rng.normal(size=len(measured)))
    a = fit_gamma(noisy, free, 0.1).to_dict()
    b = fit_gamma(noisy, free, 0.1).to_dict()
    assert a == b


def test_refit_of_fitted_curve_is_idempotent():
    rng = np.random.default_rng(12)
    measured, free = synthetic_decay(0.02)
    noisy = TimeSeries(measured.times, measured.values + 0.01 * rng.normal(size=len(measured)))
    g1 = fit_gamma(noisy, free, 0.1).parameters["gamma"]
    e = np.exp(-2 * g1 * measured.times)
    model = TimeSeries(measured.times, free.values * e + 0.1 * (1 - e))
    assert fit_gamma(model, free, 0.1).parameters["gamma"] == pytest.approx(g1, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.005, 0.5), st.floats(-1, 1))
def test_recovers_any_gamma(gamma, avg):
    t = np.linspace(0, 10 / gamma, 600)
    e = np.exp(-2 * gamma * t)
    measured = TimeSeries(t, e + avg * (1 - e))
    free = TimeSeries(t, np.ones(t.size))
    if abs(1 - avg) < 1e-3:
        return
    assert fit_gamma(measured, free, avg).parameters["gamma"] == pytest.approx(gamma, rel=1e-6)


def test_window_end_stops_after_settling():
    t = np.arange(400.0)
    values = np.where(t < 100, 1.0, 0.0)
    assert fit_window_end(TimeSeries(t, values), 0.0, 0.01, run=50) == 150
    assert fit_window_end(TimeSeries(t, np.ones(400)), 0.0, 0.01) == 400


def test_window_end_used_when_estimate_given():
    measured, free = synthetic_decay(0.05, t_max=1000.0, n=4000)
    fit = fit_gamma(measured, free, 0.1, delta_sq_est=1e-6)
    assert fit.diagnostics["n_points"] < 4000
    assert fit.parameters["gamma"] == pytest.approx(0.05, rel=1e-3)


def test_levenberg_marquardt_linear_problem():
    x = np.linspace(0, 1, 20)
    y = 3 * x - 2
    p, conv, _, _, r = levenberg_marquardt(
        lambda p: p[0] * x + p[1] - y, lambda p: np.column_stack([x, np.ones_like(x)]), [0.0, 0.0]
    )
    assert conv
    assert p == pytest.approx([3, -2], abs=1e-8)
    assert np.abs(r).max() < 1e-8


def test_levenberg_marquardt_rosenbrock():
    def res(p):
        return np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]])

    def jac(p):
        return np.array([[-20 * p[0], 10.0], [-1.0, 0.0]])

    p, conv, *_ = levenberg_marquardt(res, jac, [-1.2, 1.0])
    assert conv
    assert p == pytest.approx([1, 1], abs=1e-8)


def profile(x, values, eps=0.0):
    return SmoothedProfile(x, values, eps, "ldos")


def test_lorentzian_area_parameter():
    x = np.linspace(-2000, 2000, 2_000_001)
    assert np.trapezoid(lorentzian(x, 2.5, 0.3, 0.1), x) == pytest.approx(2.5, rel=1e-4)


def test_lorentzian_fit_exact():
    x = np.linspace(-2, 2, 801)
    fit = fit_lorentzian(profile(x, lorentzian(x, 1.0, 0.0, 0.1)))
    for key, value in (("amplitude", 1.0), ("center", 0.0), ("width", 0.1)):
        assert fit.parameters[key] == pytest.approx(value, abs=1e-6)
    assert fit.parameters["gamma"] == fit.parameters["width"]


def test_lorentzian_fit_removes_kernel_width():
    x = np.linspace(-2, 2, 801)
    fit = fit_lorentzian(profile(x, lorentzian(x, 1.0, 0.2, 0.13), eps=0.03))
    assert fit.parameters["width"] == pytest.approx(0.1, abs=1e-6)
    assert fit.diagnostics["raw_width"] == pytest.approx(0.13, abs=1e-6)
    with pytest.raises(FitError):
        fit_lorentzian(profile(x, lorentzian(x, 1.0, 0.0, 0.1), eps=0.2))


def test_strength_convention_halves_gamma():
    x = np.linspace(-2, 2, 801)
    fit = fit_lorentzian(profile(x, lorentzian(x, 1.0, 0.0, 0.1)), "strength")
    assert fit.parameters["gamma"] == pytest.approx(0.05, abs=1e-6)
    with pytest.raises(ValueError):
        fit_lorentzian(profile(x, lorentzian(x, 1.0, 0.0, 0.1)), "other")


def test_symmetric_profile_centered():
    x = np.linspace(-3, 3, 601)
    y = lorentzian(x, 1.0, 0.0, 0.2) + 0.5 * lorentzian(x, 1.0, 0.0, 0.6)
    assert abs(fit_lorentzian(profile(x, y)).parameters["center"]) < 1e-9


def test_zero_profile_rejected():
    x = np.linspace(-1, 1, 50)
    with pytest.raises(DegenerateInputError):
        fit_lorentzian(profile(x, np.zeros(50)))
    with pytest.raises(ValueError):
        fit_lorentzian(profile(x, -np.ones(50)))
