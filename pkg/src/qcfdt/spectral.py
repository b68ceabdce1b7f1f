"""Dense exact diagonalization and quantities read directly off eigenpairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .hilbert import ParameterError
from .models import ObservableMatrix

__all__ = [
    "EigenSystem",
    "SmoothedProfile",
    "DiagonalizationError",
    "diagonalize",
    "overlaps",
    "lorentzian_kernel",
    "ldos_profile",
    "strength_function",
    "dos_estimate",
    "mean_level_spacing",
    "observable_to_eigenbasis",
    "as_dense",
    "empirical_four_point",
]


class DiagonalizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenSystem:
    """Ascending ``energies`` and orthogonal ``vectors`` (column ``mu`` = state ``mu``).

    ``vectors[a, mu]`` is the overlap ``<phi_a|psi_mu>`` with the basis named by
    ``basis_tag``.
    """

    energies: np.ndarray
    vectors: np.ndarray
    basis_tag: str = "noninteracting"

    @property
    def dimension(self) -> int:
        return self.energies.size

    def orthogonality_error(self) -> float:
        v = self.vectors
        return float(np.abs(v.T @ v - np.eye(self.dimension)).max())

    def reconstruction_error(self, H) -> float:
        """Max-norm of ``V diag(E) V^T - H`` divided by ``max|H|``."""
        H = as_dense(H)
        rebuilt = (self.vectors * self.energies) @ self.vectors.T
        return float(np.abs(rebuilt - H).max() / max(np.abs(H).max(), 1e-300))


@dataclass(frozen=True)
class SmoothedProfile:
    energy_grid: np.ndarray
    values: np.ndarray
    kernel_width: float
    kind: str  # "ldos", "strength_function" or "dos"

    def __post_init__(self):
        if np.any(np.diff(self.energy_grid) <= 0):
            raise ParameterError("profile grid must be strictly increasing")

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.energy_grid))


def as_dense(matrix) -> np.ndarray:
    if sp.issparse(matrix):
        return matrix.toarray()
    return np.asarray(matrix)


def diagonalize(H, basis_tag: str = "noninteracting") -> EigenSystem:
    """Full dense eigendecomposition of a real symmetric matrix.

    Each eigenvector is signed so that its largest-magnitude component is
    positive (first such component on ties).
    """
    H = as_dense(H).astype(np.float64, copy=False)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] < 2:
        raise ParameterError(f"need a square matrix of dimension >= 2, got {H.shape}")
    scale = np.abs(H).max()
    asym = np.abs(H - H.T).max()
    if asym > 1e-12 * max(scale, 1.0):
        raise ParameterError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    try:
        energies, vectors = la.eigh(H, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise DiagonalizationError(
            f"eigh failed for dimension {H.shape[0]}: max|H|={scale:.6g}, "
            f"finite={np.isfinite(H).all()}, trace={np.trace(H):.6g}"
        ) from exc
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    vectors *= signs
    return EigenSystem(energies, vectors, basis_tag)


def overlaps(interacting: EigenSystem, reference: EigenSystem | np.ndarray | None = None):
    """Matrix ``c[a, mu] = <phi_a|psi_mu>``.

    ``reference`` gives the ``|phi_a>`` as columns (an :class:`EigenSystem` or a
    plain orthonormal matrix); ``None`` means the basis ``interacting`` is
    already expressed in.
    """
    if reference is None:
        return interacting.vectors
    ref = reference.vectors if isinstance(reference, EigenSystem) else np.asarray(reference)
    if ref.shape[0] != interacting.dimension:
        raise ParameterError(
            f"reference dimension {ref.shape[0]} != {interacting.dimension}"
        )
    return ref.T @ interacting.vectors


def lorentzian_kernel(delta, eps: float):
    """Unit-mass Lorentzian ``(eps/pi) / (delta^2 + eps^2)``."""
    return (eps / np.pi) / (np.square(delta) + eps * eps)


def _grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("empty energy grid")
    return grid


def mean_level_spacing(eig: EigenSystem, lo: float = 0.25, hi: float = 0.75) -> float:
    """Mean spacing of the levels between fractional positions ``lo``..``hi`` of the spectrum."""
    e = eig.energies
    emin, emax = e[0], e[-1]
    sel = e[(e >= emin + lo * (emax - emin)) & (e <= emin + hi * (emax - emin))]
    if sel.size < 2:
        return float((emax - emin) / max(e.size - 1, 1))
    return float((sel[-1] - sel[0]) / (sel.size - 1))


def ldos_profile(state, eig: EigenSystem, eps: float | None = None, grid=None) -> SmoothedProfile:
    """Smoothed local density of states of ``state`` over the eigenbasis of ``eig``.

    ``eps`` defaults to five mean level spacings (central half of the
    spectrum); ``grid`` defaults to 801 points spanning the spectrum +- 20 eps.
    """
    if eps is None:
        eps = 5.0 * mean_level_spacing(eig)
    if eps <= 0:
        raise ParameterError("kernel width must be positive")
    if grid is None:
        grid = np.linspace(eig.energies[0] - 20 * eps, eig.energies[-1] + 20 * eps, 801)
    grid = _grid(grid)
    weights = np.square(eig.vectors.T @ np.asarray(state, dtype=float))
    values = lorentzian_kernel(grid[:, None] - eig.energies[None, :], eps) @ weights
    return SmoothedProfile(grid, values, eps, "ldos")


def central_window(energies: np.ndarray, fraction: float = 0.5) -> tuple[float, float]:
    """Energy interval holding the middle ``fraction`` of the spectrum's *range*."""
    emin, emax = float(energies[0]), float(energies[-1])
    margin = 0.5 * (1.0 - fraction) * (emax - emin)
    return emin + margin, emax - margin


def strength_function(
    O_int: np.ndarray,
    eig: EigenSystem,
    eps: float | None = None,
    grid=None,
    window: tuple[float, float] | None = None,
) -> SmoothedProfile:
    """Off-diagonal strength ``S(w)`` per reference state.

    ``S(w) = (1/M) sum_{mu in window} sum_{nu != mu} |O_mu nu|^2 delta_eps(w - (E_mu - E_nu))``,
    with ``M`` the number of ``mu`` in ``window`` (default: central half of the
    spectrum by energy range).  With that normalization the profile integrates
    to the mean of ``(O^2)_mu mu - O_mu mu^2`` over the window.

    Pair gaps are binned at ``eps / 50`` before smoothing; the resulting error
    is far below the kernel width.
    """
    e = eig.energies
    if eps is None:
        eps = 5.0 * mean_level_spacing(eig)
    if window is None:
        window = central_window(e)
    rows = np.flatnonzero((e >= window[0]) & (e <= window[1]))
    if rows.size == 0:
        raise ParameterError(f"no eigenstates inside window {window}")
    if grid is None:
        span = 0.5 * (e[-1] - e[0])
        grid = np.linspace(-span, span, 1201)
    grid = _grid(grid)
    w = np.square(O_int[rows, :])
    w[np.arange(rows.size), rows] = 0.0
    gaps = e[rows, None] - e[None, :]
    lo, hi = grid[0] - 30 * eps, grid[-1] + 30 * eps
    keep = (gaps >= lo) & (gaps <= hi) & (w > 0)
    bin_width = eps / 50.0
    nbins = max(int(np.ceil((hi - lo) / bin_width)), 1)
    hist, edges = np.histogram(gaps[keep], bins=nbins, range=(lo, hi), weights=w[keep])
    centers = 0.5 * (edges[:-1] + edges[1:])
    nz = hist != 0
    values = lorentzian_kernel(grid[:, None] - centers[None, nz], eps) @ hist[nz]
    return SmoothedProfile(grid, values / rows.size, eps, "strength_function")


def dos_estimate(eig: EigenSystem, E: float, window_width: float) -> float:
    """Level count in ``[E - w/2, E + w/2]`` divided by ``w``.

    Windows reaching past either spectral edge are rejected.
    """
    if window_width <= 0:
        raise ParameterError("window width must be positive")
    lo, hi = E - 0.5 * window_width, E + 0.5 * window_width
    if lo < eig.energies[0] or hi > eig.energies[-1]:
        raise ParameterError(
            f"DOS window [{lo:.6g}, {hi:.6g}] leaves the spectrum "
            f"[{eig.energies[0]:.6g}, {eig.energies[-1]:.6g}]"
        )
    count = np.searchsorted(eig.energies, hi, "right") - np.searchsorted(eig.energies, lo, "left")
    return float(count / window_width)


def observable_to_eigenbasis(O, eig: EigenSystem) -> np.ndarray:
    """Dense ``O_mu nu = sum_ab c_mu(a) c_nu(b) O_ab``."""
    mat = O.matrix if isinstance(O, ObservableMatrix) else O
    if mat.shape[0] != eig.dimension:
        raise ParameterError(f"observable dimension {mat.shape[0]} != {eig.dimension}")
    if isinstance(O, ObservableMatrix) and O.basis_tag != eig.basis_tag:
        raise ParameterError(
            f"observable basis {O.basis_tag!r} differs from eigensystem basis {eig.basis_tag!r}"
        )
    v = eig.vectors
    return v.T @ np.asarray(mat @ v)


def empirical_four_point(coefficients, mu: int, nu: int, idx) -> tuple[float, float]:
    """Sample mean and standard error of ``c_mu(a0) c_nu(b0) c_mu(a) c_nu(b)``.

    ``coefficients`` is an iterable of ``c[a, mu]`` matrices (one per
    realization) and ``idx = (a0, b0, a, b)``.  The product carries each
    eigenvector twice, so eigenvector sign conventions drop out.
    """
    a0, b0, a, b = idx
    samples = np.array([c[a0, mu] * c[b0, nu] * c[a, mu] * c[b, nu] for c in coefficients])
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(samples.size))
