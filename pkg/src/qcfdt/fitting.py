"""Least-squares extraction of the decay width from dynamics and Lorentzian
fits to smoothed spectral profiles.

Both fits share one small damped Gauss-Newton driver so the iteration
schedule is fixed and the results are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import TimeSeries
from .spectral import SmoothedProfile

__all__ = [
    "FitResult",
    "FitError",
    "DegenerateInputError",
    "levenberg_marquardt",
    "fit_gamma",
    "fit_window_end",
    "fit_lorentzian",
    "lorentzian",
]

MAX_ITER = 200
REL_TOL = 1e-10
DAMPING_START = 1e-3
GAIN_MIN = 0.25


class FitError(RuntimeError):
    """A fit produced an unusable result (for example a negative width)."""


class DegenerateInputError(ValueError):
    """Input data carry no information about the fitted parameters."""


@dataclass
class FitResult:
    parameters: dict
    covariance_diag: dict
    residual_rms: float
    converged: bool
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "parameters": dict(self.parameters),
            "covariance_diag": dict(self.covariance_diag),
            "residual_rms": self.residual_rms,
            "converged": self.converged,
            "iterations": self.iterations,
            "diagnostics": dict(self.diagnostics),
        }


def levenberg_marquardt(residual, jacobian, p0, max_iter: int = MAX_ITER, rtol: float = REL_TOL):
    """Minimize ``|residual(p)|^2``.

    Damping starts at 1e-3, is multiplied by 10 after a rejected step and
    divided by 10 after an accepted one.  A step is accepted when the actual
    cost reduction is at least a quarter of the reduction predicted by the
    linearized model; this stops plain Gauss-Newton from oscillating on
    large-residual problems.  Stops when the proposed step changes
    every parameter by less than ``rtol`` relative.  Returns
    ``(p, converged, iterations, jacobian_at_p, residual_at_p)``.
    """
    p = np.array(p0, dtype=float)
    r = residual(p)
    cost = r @ r
    lam = DAMPING_START
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        JTJ = J.T @ J
        g = J.T @ r
        A = JTJ + lam * np.diag(np.maximum(np.diag(JTJ), 1e-300))
        try:
            step = -np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        if np.all(np.abs(step) <= rtol * np.maximum(np.abs(p), 1e-300)):
            return p, True, it, J, r
        trial = p + step
        r_trial = residual(trial)
        cost_trial = r_trial @ r_trial
        predicted = -(2.0 * g @ step + step @ JTJ @ step)
        gain = (cost - cost_trial) / predicted if predicted > 0 else -1.0
        if np.isfinite(cost_trial) and (gain >= GAIN_MIN or (predicted <= 0 and cost_trial <= cost)):
            p, r, cost = trial, r_trial, cost_trial
            lam = max(lam / 10, 1e-15)
        else:
            lam *= 10
            if lam > 1e20:
                return p, False, it, jacobian(p), r
    return p, False, max_iter, jacobian(p), r


def _covariance_diag(J, r, n_params):
    dof = max(r.size - n_params, 1)
    s2 = (r @ r) / dof
    try:
        return np.diag(np.linalg.inv(J.T @ J)) * s2
    except np.linalg.LinAlgError:
        return np.full(n_params, np.nan)


# -- decay width -----------------------------------------------------------


def fit_window_end(measured: TimeSeries, long_time_avg: float, delta_sq_est: float,
                   run: int = 50) -> int:
    """Index closing the dynamics fit window.

    The window runs from the first sample to the first time the series stays
    within ``2 sqrt(delta_sq_est)`` of ``long_time_avg`` for ``run``
    consecutive samples (end of that run).  Falls back to the full series.
    """
    band = 2.0 * math.sqrt(max(delta_sq_est, 0.0))
    inside = np.abs(measured.values - long_time_avg) <= band
    count = 0
    for i, ok in enumerate(inside):
        count = count + 1 if ok else 0
        if count == run:
            return i + 1
    return len(measured)


def fit_gamma(measured: TimeSeries, free: TimeSeries, long_time_avg: float,
              delta_sq_est: float | None = None) -> FitResult:
    """Fit ``Gamma`` in ``free(t) exp(-2 Gamma t) + avg (1 - exp(-2 Gamma t))``.

    The single parameter is fitted as ``log Gamma`` with uniform weights.
    Initialization: the best of 20 log-spaced values in
    ``[1/t_max, 10/t_min]`` (``t_min`` = first positive time).  With
    ``delta_sq_est`` the data are cut by :func:`fit_window_end`.
    """
    if len(measured) != len(free) or not np.array_equal(measured.times, free.times):
        raise ValueError("measured and free series must share a time grid")
    if len(measured) < 50:
        raise ValueError(f"need at least 50 samples, got {len(measured)}")
    if np.var(measured.values) < 1e-14:
        raise DegenerateInputError("measured series is flat")
    end = len(measured)
    if delta_sq_est is not None:
        end = max(fit_window_end(measured, long_time_avg, delta_sq_est), 50)
    t = measured.times[:end]
    y = measured.values[:end]
    f = free.values[:end] - long_time_avg
    if np.max(np.abs(f)) == 0:
        raise DegenerateInputError("free series coincides with the long-time average")

    def residual(p):
        return f * np.exp(-2.0 * math.exp(p[0]) * t) + long_time_avg - y

    def jacobian(p):
        gamma = math.exp(p[0])
        return (-2.0 * gamma * t * f * np.exp(-2.0 * gamma * t))[:, None]

    positive = t[t > 0]
    t_lo, t_hi = positive[0], t[-1]
    grid = np.geomspace(1.0 / t_hi, 10.0 / t_lo, 20)
    costs = [np.sum(residual([math.log(g)]) ** 2) for g in grid]
    p0 = [math.log(grid[int(np.argmin(costs))])]
    p, converged, iterations, J, r = levenberg_marquardt(residual, jacobian, p0)
    gamma = math.exp(p[0])
    var_log = _covariance_diag(J, r, 1)[0]
    return FitResult(
        {"gamma": gamma},
        {"gamma": float(var_log * gamma**2)},
        float(np.sqrt(np.mean(r * r))),
        bool(converged),
        iterations,
        {"window_end_time": float(t[-1]), "n_points": int(end)},
    )


# -- Lorentzian profiles ---------------------------------------------------


def lorentzian(x, amplitude, center, width):
    """``amplitude * (width/pi) / ((x - center)^2 + width^2)``; ``amplitude`` is the area."""
    return amplitude * (width / math.pi) / (np.square(x - center) + width * width)


def _initial_lorentzian(x, y):
    i = int(np.argmax(y))
    peak = y[i]
    above = np.flatnonzero(y >= 0.5 * peak)
    hwhm = 0.5 * (x[above[-1]] - x[above[0]])
    hwhm = max(hwhm, 0.5 * np.min(np.diff(x)))
    return np.array([peak * math.pi * hwhm, x[i], hwhm])


def fit_lorentzian(profile: SmoothedProfile, convention: str = "ldos") -> FitResult:
    """Fit ``(amplitude, center, width)`` of a Lorentzian to ``profile``.

    ``width`` is the half width at half maximum after removing the smoothing
    kernel (Lorentzian widths add under convolution).  ``gamma`` reports the
    decay width: equal to ``width`` for ``convention="ldos"`` and ``width / 2``
    for ``convention="strength"``, whose profile has twice the width.
    """
    if convention not in ("ldos", "strength"):
        raise ValueError(f"unknown width convention {convention!r}")
    x = np.asarray(profile.energy_grid, dtype=float)
    y = np.asarray(profile.values, dtype=float)
    if x.size < 10:
        raise ValueError("need at least 10 grid points")
    if np.any(y < 0):
        raise ValueError("profile values must be non-negative")
    if np.max(y) <= 0:
        raise DegenerateInputError("profile is identically zero")

    def residual(p):
        return lorentzian(x, *p) - y

    def jacobian(p):
        a, c, w = p
        d = x - c
        den = d * d + w * w
        base = (w / math.pi) / den
        return np.column_stack([
            base,
            a * base * 2 * d / den,
            a / math.pi * (d * d - w * w) / den**2,
        ])

    p, converged, iterations, J, r = levenberg_marquardt(residual, jacobian, _initial_lorentzian(x, y))
    amplitude, center, raw_width = (float(v) for v in p)
    if raw_width <= 0:
        raise FitError(f"fitted width {raw_width:.4g} is not positive")
    width = raw_width - profile.kernel_width
    if width <= 0:
        raise FitError(
            f"fitted width {raw_width:.4g} does not exceed the kernel width {profile.kernel_width:.4g}"
        )
    cov = _covariance_diag(J, r, 3)
    gamma = width if convention == "ldos" else 0.5 * width
    return FitResult(
        {"amplitude": amplitude, "center": center, "width": width, "gamma": gamma},
        {"amplitude": float(cov[0]), "center": float(cov[1]), "width": float(cov[2]),
         "gamma": float(cov[2] if convention == "ldos" else cov[2] / 4)},
        float(np.sqrt(np.mean(r * r))),
        bool(converged),
        iterations,
        {"raw_width": raw_width, "kernel_width": profile.kernel_width},
    )
