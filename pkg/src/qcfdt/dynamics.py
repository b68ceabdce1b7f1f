"""Quench dynamics in the eigenbasis, time averages and time fluctuations."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hilbert import ParameterError
from .models import ObservableMatrix
from .spectral import EigenSystem, observable_to_eigenbasis

__all__ = [
    "TimeSeries",
    "FluctuationReport",
    "evolve_expectation",
    "free_evolution",
    "evolve_diagonal_basis",
    "analytic_free_evolution",
    "diagonal_weights",
    "time_average_diagonal",
    "fluctuations_diagonal",
    "fluctuations_windowed",
    "default_window",
]

_CHUNK = 256


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ParameterError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ParameterError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.times.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                writer.writerow([format(float(t), ".17g"), format(float(v), ".17g")])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["t", "value"]:
                raise ParameterError(f"unexpected time series header {header}")
            rows = [(float(a), float(b)) for a, b in reader]
        t, v = zip(*rows) if rows else ((), ())
        return cls(np.array(t), np.array(v))

    def window(self, t_min: float, t_max: float) -> "TimeSeries":
        sel = (self.times >= t_min) & (self.times <= t_max)
        return TimeSeries(self.times[sel], self.values[sel])


@dataclass(frozen=True)
class FluctuationReport:
    delta_sq_measured: float
    delta_sq_diag_ensemble: float
    time_average: float
    microcanonical_average: float
    window: tuple[float, float]


def _matrix(O, eig: EigenSystem):
    if isinstance(O, ObservableMatrix):
        if O.basis_tag != eig.basis_tag:
            raise ParameterError(
                f"observable basis {O.basis_tag!r} differs from eigensystem basis {eig.basis_tag!r}"
            )
        O = O.matrix
    if O.shape[0] != eig.dimension:
        raise ParameterError(f"observable dimension {O.shape[0]} != {eig.dimension}")
    return O


def diagonal_weights(eig: EigenSystem, psi0) -> np.ndarray:
    """Overlaps ``<psi_mu|psi(0)>`` of a real initial state."""
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.shape[0] != eig.dimension:
        raise ParameterError(f"state dimension {psi0.shape[0]} != {eig.dimension}")
    return eig.vectors.T @ psi0


def evolve_expectation(eig: EigenSystem, psi0, O, times) -> TimeSeries:
    """``<O(t)>`` after a quench into the Hamiltonian diagonalized by ``eig``.

    The state is propagated exactly in the eigenbasis and mapped back, so the
    cost is ``O(dim^2)`` per time point.  Real and imaginary parts of
    ``psi(t)`` are carried separately; the imaginary part of the expectation
    (nonzero only through round-off) is checked against ``1e-9``.
    """
    O = _matrix(O, eig)
    times = np.asarray(times, dtype=float)
    amp = diagonal_weights(eig, psi0)
    values = np.empty(times.size)
    V = eig.vectors
    for start in range(0, times.size, _CHUNK):
        t = times[start : start + _CHUNK]
        phase = np.outer(eig.energies, t)
        re = V @ (amp[:, None] * np.cos(phase))
        im = -(V @ (amp[:, None] * np.sin(phase)))
        O_re = np.asarray(O @ re)
        O_im = np.asarray(O @ im)
        values[start : start + t.size] = np.einsum("ij,ij->j", re, O_re) + np.einsum(
            "ij,ij->j", im, O_im
        )
        imag = np.einsum("ij,ij->j", re, O_im) - np.einsum("ij,ij->j", im, O_re)
        if np.abs(imag).max() > 1e-9:
            raise ParameterError(f"non-real expectation value (residue {np.abs(imag).max():.3e})")
    return TimeSeries(times, values)


def evolve_diagonal_basis(energies, amplitudes, O, times) -> TimeSeries:
    """``<O(t)>`` when the Hamiltonian is diagonal in the basis ``O`` is written in.

    ``amplitudes`` are the (real) initial components in that basis.  Only
    components that are nonzero enter, so the cost is ``O(nnz)`` per time.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    energies = np.asarray(energies, dtype=float)
    support = np.flatnonzero(amplitudes)
    mat = O.matrix if isinstance(O, ObservableMatrix) else O
    sub = sp.csr_matrix(mat)[support][:, support]
    a, e = amplitudes[support], energies[support]
    times = np.asarray(times, dtype=float)
    values = np.empty(times.size)
    for start in range(0, times.size, _CHUNK):
        t = times[start : start + _CHUNK]
        phase = np.outer(e, t)
        c = a[:, None] * np.cos(phase)
        s = a[:, None] * np.sin(phase)
        values[start : start + t.size] = np.einsum("ij,ij->j", c, np.asarray(sub @ c)) + np.einsum(
            "ij,ij->j", s, np.asarray(sub @ s)
        )
    return TimeSeries(times, values)


def free_evolution(H0_eig: EigenSystem, psi0, O, times) -> TimeSeries:
    """Evolution under the non-interacting Hamiltonian; same contract as :func:`evolve_expectation`."""
    return evolve_expectation(H0_eig, psi0, O, times)


def analytic_free_evolution(B_z: float, B_x: float, times) -> TimeSeries:
    """``<sigma_z(t)>`` of an initially-up spin precessing in fields ``(B_z, B_x)``.

    ``A^2 + 4 B^2 cos(2 E t)`` with ``E = sqrt(B_z^2 + B_x^2)``,
    ``A = ((B_z+E)^2 - B_x^2) / ((B_z+E)^2 + B_x^2)`` and
    ``B = (B_z+E) B_x / ((B_z+E)^2 + B_x^2)``.  These simplify to ``A = B_z/E``
    and ``2B = B_x/E``, which is the form evaluated (it stays finite for
    ``B_z < 0``, ``B_x = 0``).
    """
    if B_z == 0 and B_x == 0:
        raise ParameterError("at least one field component must be nonzero")
    E = np.hypot(B_z, B_x)
    times = np.asarray(times, dtype=float)
    return TimeSeries(times, (B_z * B_z + B_x * B_x * np.cos(2 * E * times)) / (E * E))


def _warn_if_degenerate(eig: EigenSystem):
    e = eig.energies
    bandwidth = e[-1] - e[0]
    gap = np.diff(e).min()
    if gap <= 1e-12 * bandwidth:
        warnings.warn(
            f"near-degenerate spectrum (min gap {gap:.3e}); diagonal-ensemble "
            "formulas assume non-degenerate levels",
            stacklevel=3,
        )


def _diagonal_in_eigenbasis(O, eig: EigenSystem) -> np.ndarray:
    mat = _matrix(O, eig)
    V = eig.vectors
    OV = mat @ V if sp.issparse(mat) else np.asarray(mat) @ V
    return np.einsum("ij,ij->j", V, np.asarray(OV))


def time_average_diagonal(eig: EigenSystem, psi0, O) -> float:
    """Infinite-time average ``sum_mu |<psi_mu|psi0>|^2 O_mu mu``."""
    _warn_if_degenerate(eig)
    p = np.square(diagonal_weights(eig, psi0))
    return float(p @ _diagonal_in_eigenbasis(O, eig))


def fluctuations_diagonal(eig: EigenSystem, psi0, O, O_int: np.ndarray | None = None) -> float:
    """Infinite-time fluctuations ``sum_{mu != nu} p_mu p_nu |O_mu nu|^2``.

    Assumes non-degenerate gaps.  Pass ``O_int`` (``O`` in the eigenbasis) to
    avoid recomputing it.
    """
    _warn_if_degenerate(eig)
    p = np.square(diagonal_weights(eig, psi0))
    if O_int is None:
        O_int = observable_to_eigenbasis(O, eig)
    total = p @ np.square(O_int) @ p
    diag = np.square(np.diagonal(O_int)) @ np.square(p)
    return float(max(total - diag, 0.0))


def default_window(gamma: float) -> tuple[float, float]:
    """Averaging window ``[10/Gamma, 1000/Gamma]`` used for finite-time fluctuations.

    The start excludes the decay transient.  The length keeps the relative
    scatter of the estimate near 5%; a ``50/Gamma`` end leaves ~20%.
    """
    return 10.0 / gamma, 1000.0 / gamma


def fluctuations_windowed(
    series: TimeSeries, window: tuple[float, float] | None = None, gamma_est: float | None = None
) -> float:
    """Mean of squares minus squared mean of ``series`` over ``window``.

    Needs at least 100 samples in the window; when ``gamma_est`` is given the
    window must start at or after ``5 / gamma_est``.
    """
    if window is None:
        window = (series.times[0], series.times[-1])
    if gamma_est is not None and window[0] < 5.0 / gamma_est * (1 - 1e-12):
        raise ParameterError(
            f"window starts at {window[0]:.4g}, before 5/Gamma = {5.0 / gamma_est:.4g}"
        )
    part = series.window(*window)
    if len(part) < 100:
        raise ParameterError(f"window holds {len(part)} samples, need >= 100")
    v = part.values
    return float(max(np.mean(v * v) - np.mean(v) ** 2, 0.0))
