"""Closed-form predictions: Lorentzian overlap profiles, chaotic-wavefunction
correlators, microcanonical averages, the decay law and the fluctuation-
dissipation relations.

Index arguments refer to the discrete energy grid of the random-matrix model,
``E_i = (i + 1) * omega0``, unless an explicit ``energies`` array is given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import TimeSeries
from .hilbert import ParameterError
from .models import ObservableMatrix

__all__ = [
    "LorentzianFamily",
    "BandCoefficients",
    "lambda_n",
    "four_point_offdiag",
    "four_point_diag",
    "microcanonical_average",
    "band_coefficients",
    "crossed_field_band_coefficients",
    "crossed_field_amplitudes",
    "predicted_decay",
    "qcfdt_simple",
    "qcfdt_general",
    "qcfdt_three_peak",
    "third_term_kernel",
    "bound_third_term",
    "third_term_direct",
]


@dataclass(frozen=True)
class LorentzianFamily:
    omega0: float
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if not self.omega0 > 0:
            raise ParameterError(f"omega0 must be positive, got {self.omega0}")

    def energy(self, index, energies=None):
        if energies is not None:
            return np.asarray(energies)[index]
        return (np.asarray(index) + 1) * self.omega0


@dataclass(frozen=True)
class BandCoefficients:
    """Band weights ``a_n`` (``n = 0``: microcanonical variance) and peak energies."""

    coefficients: dict
    energies: dict = field(default_factory=dict)
    center: float = 0.0

    def __post_init__(self):
        for n, a in self.coefficients.items():
            if a < -1e-12:
                raise ParameterError(f"band coefficient a_{n} = {a} is negative")

    def total(self) -> float:
        return float(sum(self.coefficients.values()))


def lambda_n(fam: LorentzianFamily, n: int, dE):
    """``omega0 n Gamma / pi / (dE^2 + (n Gamma)^2)``; ``n = 1`` is the overlap profile."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    w = n * fam.gamma
    return fam.omega0 * w / math.pi / (np.square(dE) + w * w)


def four_point_offdiag(fam: LorentzianFamily, E_mu: float, E_nu: float, idx, energies=None) -> float:
    """``<c_mu(a0) c_nu(b0) c_mu(a) c_nu(b)>`` for ``mu != nu``.

    ``E_mu`` and ``E_nu`` are the interacting energies; ``idx = (a0, b0, a, b)``
    are basis labels whose energies come from ``energies`` (default: the
    ladder).  Gaussian pairing ``L(mu,a0) L(nu,b0) d(a0,a) d(b0,b)`` minus the
    orthogonality corrections ``L(mu,x)L(nu,x)L(mu,y)L(nu,y) / L2(mu,nu)`` for
    the pairings ``(a0=b0, a=b)`` and ``(a0=b, b0=a)``.
    """
    if E_mu == E_nu:
        raise ParameterError("mu == nu: use four_point_diag")
    a0, b0, a, b = idx

    def L(E, x):
        return lambda_n(fam, 1, E - fam.energy(x, energies))

    value = 0.0
    if a0 == a and b0 == b:
        value += L(E_mu, a0) * L(E_nu, b0)
    l2 = lambda_n(fam, 2, E_mu - E_nu)
    if a0 == b0 and a == b:
        value -= L(E_mu, a0) * L(E_nu, a0) * L(E_mu, a) * L(E_nu, a) / l2
    if a0 == b and b0 == a:
        value -= L(E_mu, a0) * L(E_nu, a0) * L(E_mu, b0) * L(E_nu, b0) / l2
    return float(value)


def four_point_diag(fam: LorentzianFamily, E_mu: float, idx, energies=None) -> float:
    """``<c_mu(a) c_mu(b) c_mu(a') c_mu(b')>`` from Gaussian (Wick) pairings."""
    a, b, ap, bp = idx

    def L(x):
        return lambda_n(fam, 1, E_mu - fam.energy(x, energies))

    value = 0.0
    if a == b and ap == bp:
        value += L(a) * L(ap)
    if a == ap and b == bp:
        value += L(a) * L(b)
    if a == bp and ap == b:
        value += L(a) * L(b)
    return float(value)


def _band_weights(O: ObservableMatrix, n: int, fam: LorentzianFamily, E_center: float):
    energies = O.energies
    if energies is None:
        energies = (np.arange(O.dimension) + 1) * fam.omega0
    values = O.band(n)
    rows = np.arange(values.size) + max(-n, 0)
    mid = 0.5 * (energies[rows] + energies[rows + n])
    w = lambda_n(fam, 1, E_center - mid)
    total = lambda_n(fam, 1, E_center - energies).sum()
    return w / total, values


def microcanonical_average(O: ObservableMatrix, n: int, fam: LorentzianFamily, E_center: float,
                           power: int = 1) -> float:
    """Lorentzian-weighted average of ``O[a, a+n]**power`` around ``E_center``.

    Each element sits at the mid-energy of its two basis states.  Weights are
    normalized by the total weight of *all* basis states, so the average of
    the identity is exactly 1 and a band populated on half the states carries
    half the weight.
    """
    w, values = _band_weights(O, n, fam, E_center)
    return float(w @ values**power)


def band_coefficients(O: ObservableMatrix, fam: LorentzianFamily, E_center: float) -> BandCoefficients:
    """``a_0`` = microcanonical variance of the diagonal; ``a_n`` = average of ``O[a,a+n]^2``."""
    coeffs = {}
    for n in sorted(O.bands):
        if n == 0:
            mean = microcanonical_average(O, 0, fam, E_center)
            coeffs[0] = max(microcanonical_average(O, 0, fam, E_center, power=2) - mean**2, 0.0)
        else:
            coeffs[n] = microcanonical_average(O, n, fam, E_center, power=2)
    energies = {n: O.band_energies.get(n, 0.0) for n in coeffs}
    return BandCoefficients(coeffs, energies, E_center)


def crossed_field_amplitudes(B_z: float, B_x: float) -> tuple[float, float, float]:
    """``(psi_plus, psi_minus, E)`` for an up spin in the eigenbasis of ``B_z sz + B_x sx``.

    ``psi_plus = (B_z + E) / n`` and ``psi_minus = B_x / n`` with
    ``n = sqrt((B_z + E)^2 + B_x^2)``, evaluated as ``cos(theta/2)`` and
    ``sin(theta/2)`` with ``theta = atan2(B_x, B_z)``.
    """
    if B_z == 0 and B_x == 0:
        raise ParameterError("at least one field component must be nonzero")
    half = 0.5 * math.atan2(B_x, B_z)
    return math.cos(half), math.sin(half), math.hypot(B_z, B_x)


def crossed_field_band_coefficients(B_z: float, B_x: float, time_average: float) -> BandCoefficients:
    """Three-peak weights of ``sigma_z`` with a transverse system field.

    ``a_0 = B_z^2/E^2 - time_average^2`` and ``a_{+-1} = B_x^2 / (2 E^2)``,
    peaks at ``0`` and ``+-2E``.
    """
    _, _, E = crossed_field_amplitudes(B_z, B_x)
    a0 = B_z**2 / E**2 - time_average**2
    a1 = B_x**2 / (2 * E**2)
    return BandCoefficients({0: max(a0, 0.0), 1: a1, -1: a1}, {0: 0.0, 1: 2 * E, -1: -2 * E})


def predicted_decay(O_free: TimeSeries, O_avg: float, gamma: float) -> TimeSeries:
    """``<O(t)>_0 exp(-2 Gamma t) + O_avg (1 - exp(-2 Gamma t))``."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    decay = np.exp(-2.0 * gamma * O_free.times)
    return TimeSeries(O_free.times, O_free.values * decay + O_avg * (1.0 - decay))


def qcfdt_simple(variance: float, spacing: float, gamma: float) -> float:
    """Fluctuations ``spacing / (4 pi Gamma) * variance``; ``spacing`` is ``omega0`` or ``1/D(E)``."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    return spacing / (4.0 * math.pi * gamma) * variance


def qcfdt_general(weights, energies, bands: BandCoefficients, fam: LorentzianFamily) -> float:
    """``sum_ab sum_n a_n w_a w_b L4(E_a - E_b + E_n)`` for initial weights ``w = |psi_a|^2``."""
    weights = np.asarray(weights, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-8:
        raise ParameterError(f"initial weights sum to {weights.sum()!r}, expected 1")
    nz = np.flatnonzero(weights)
    w, e = weights[nz], energies[nz]
    gaps = e[:, None] - e[None, :]
    total = 0.0
    for n, a_n in bands.coefficients.items():
        if a_n == 0:
            continue
        shift = bands.energies.get(n, 0.0)
        total += a_n * (w @ lambda_n(fam, 4, gaps + shift) @ w)
    return float(total)


def qcfdt_three_peak(B_z: float, B_x: float, gamma: float, inverse_dos: float,
                     time_average: float) -> float:
    """Closed-form fluctuations of ``sigma_z`` for an up spin in crossed fields."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    psi_p, psi_m, E = crossed_field_amplitudes(B_z, B_x)
    bands = crossed_field_band_coefficients(B_z, B_x, time_average)
    a0, a1 = bands.coefficients[0], bands.coefficients[1]
    g = gamma

    def lor(x):
        return (4 * g / math.pi) / (x * x + (4 * g) ** 2)

    same = (psi_p**4 + psi_m**4) * (a0 / (4 * math.pi * g) + 2 * a1 * lor(2 * E))
    cross = 2 * psi_p**2 * psi_m**2 * (a0 * lor(2 * E) + a1 / (4 * math.pi * g) + a1 * lor(4 * E))
    return inverse_dos * (same + cross)


def third_term_kernel(fam: LorentzianFamily, dE):
    """Closed form of ``sum_{mu != nu} L(mu,a0)L(nu,a0)L(mu,b0)L(nu,b0)/L2(mu,nu)``
    in the continuum limit, as a function of ``dE = E_a0 - E_b0``."""
    g = fam.gamma
    dE2 = np.square(dE)
    return fam.omega0 * (dE2 * g + 12 * g**3) / (math.pi * (dE2 + 4 * g * g) ** 2)


def bound_third_term(O: ObservableMatrix, fam: LorentzianFamily) -> float:
    """Upper bound ``max|O| * N_O * 3 omega0 / (4 pi Gamma)`` on the neglected term."""
    biggest = float(np.abs(O.matrix.data).max()) if O.matrix.nnz else 0.0
    return biggest * len(O.bands) * 3.0 * fam.omega0 / (4.0 * math.pi * fam.gamma)


def third_term_direct(O: ObservableMatrix, psi0, fam: LorentzianFamily, times,
                      energies=None) -> np.ndarray:
    """Evaluate the neglected term ``A(t)`` by explicit summation over the grid.

    ``A(t) = sum_{mu != nu} sum_{a0 b0} psi_a0 psi_b0 O_a0b0
    L(mu,a0) L(nu,a0) L(mu,b0) L(nu,b0) / L2(mu,nu) exp(-i (E_mu - E_nu) t)``,
    with ``mu, nu`` on the same grid as ``a0, b0``.  Returns real ``A(t)``
    (the imaginary part cancels by the ``mu <-> nu`` symmetry).
    """
    psi0 = np.asarray(psi0, dtype=float)
    N = O.dimension
    e = fam.energy(np.arange(N), energies)
    times = np.asarray(times, dtype=float)
    inv_l2 = 1.0 / lambda_n(fam, 2, e[:, None] - e[None, :])
    np.fill_diagonal(inv_l2, 0.0)
    coo = O.matrix.tocoo()
    cos_t = np.cos(np.outer(e, times))
    sin_t = np.sin(np.outer(e, times))
    result = np.zeros(times.size)
    for a0, b0, val in zip(coo.row, coo.col, coo.data):
        amp = psi0[a0] * psi0[b0] * val
        if amp == 0:
            continue
        k = lambda_n(fam, 1, e - e[a0]) * lambda_n(fam, 1, e - e[b0])
        M = k[:, None] * inv_l2 * k[None, :]
        result += amp * (np.einsum("it,it->t", cos_t, M @ cos_t)
                         + np.einsum("it,it->t", sin_t, M @ sin_t))
    return result
