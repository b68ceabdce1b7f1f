"""Model builders: the banded random-matrix model, the system/bath spin chain,
synthetic observables and initial states.

Index conventions.  Arrays are 0-based; the random-matrix model's level
``i`` has energy ``E = (i + 1) * omega0`` so the unperturbed spectrum spans
``(0, 1]``.  "Odd" levels in the parity observables are odd in the 1-based
counting, i.e. array indices ``0, 2, 4, ...``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    ParameterError,
    SpinBasis,
    basis_state,
    check_state,
    operator_product_sum,
    pauli_operator,
    product_state,
)

DEFAULT_BATH_SITE = 5


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for sub-stream ``stream`` of a run seeded by ``seed``.

    Streams are independent Philox keys derived from ``SeedSequence([seed, *stream])``
    (``stream`` defaults to ``(0,)``), so realizations can be generated in any
    order or in parallel.
    """
    words = [int(seed), *(int(s) for s in (stream or (0,)))]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


@dataclass(frozen=True)
class RmtParams:
    dimension: int
    coupling: float
    seed: int = 0

    def __post_init__(self):
        if self.dimension < 2:
            raise ParameterError(f"dimension must be >= 2, got {self.dimension}")
        if self.coupling < 0:
            raise ParameterError(f"coupling must be >= 0, got {self.coupling}")

    @property
    def omega0(self) -> float:
        return 1.0 / self.dimension

    @property
    def gamma(self) -> float:
        """Predicted width ``pi g^2 / (N omega0)``, which is ``pi g^2`` here."""
        return math.pi * self.coupling**2 / (self.dimension * self.omega0)

    @property
    def energies(self) -> np.ndarray:
        return np.arange(1, self.dimension + 1) * self.omega0


@dataclass(frozen=True)
class SpinChainParams:
    """Couplings of the system spin (site 1) plus open bath chain (sites 2..N)."""

    n_spins: int
    B_z_S: float = 0.8
    B_x_S: float = 0.0
    B_z_B: float = 0.0
    B_x_B: float = 0.3
    J_z: float = 0.1
    J_x: float = 1.0
    J_z_SB: float = 0.2
    J_x_SB: float = 0.4
    n_m: int | None = None

    def __post_init__(self):
        if self.n_spins < 2:
            raise ParameterError(f"need at least 2 spins, got {self.n_spins}")
        if self.n_m is None:
            n_m = DEFAULT_BATH_SITE
            if n_m > self.n_spins:
                warnings.warn(
                    f"bath coupling site {n_m} clamped to chain length {self.n_spins}",
                    stacklevel=3,
                )
                n_m = self.n_spins
            object.__setattr__(self, "n_m", n_m)
        if not 2 <= self.n_m <= self.n_spins:
            raise ParameterError(f"n_m={self.n_m} outside 2..{self.n_spins}")

    def scaled_coupling(self, factor: float) -> "SpinChainParams":
        """Copy with both system-bath couplings multiplied by ``factor``."""
        from dataclasses import replace

        return replace(self, J_z_SB=self.J_z_SB * factor, J_x_SB=self.J_x_SB * factor)


@dataclass(frozen=True)
class ObservableMatrix:
    """Observable expressed in a stated basis, with its band structure.

    ``bands`` holds the offsets ``n`` for which ``O[a, a + n]`` can be nonzero;
    ``band_energies[n]`` is the typical energy gap bridged by that band.
    ``energies`` are the energies of the basis states (needed by the
    microcanonical averages); ``basis_tag`` names the basis.
    """

    matrix: sp.csr_matrix
    bands: frozenset
    band_energies: dict = field(default_factory=dict)
    energies: np.ndarray | None = None
    basis_tag: str = "noninteracting"

    def __post_init__(self):
        coo = self.matrix.tocoo()
        offsets = set(np.unique(coo.col - coo.row).tolist())
        stray = offsets - set(self.bands)
        if stray:
            raise ParameterError(f"entries on undeclared bands {sorted(stray)}")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def band(self, n: int) -> np.ndarray:
        """Values ``O[a, a + n]`` for every ``a`` where ``a + n`` is in range."""
        if n not in self.bands:
            raise ParameterError(f"band {n} not declared (bands {sorted(self.bands)})")
        return np.asarray(self.matrix.diagonal(n)).ravel()


# -- random-matrix model ---------------------------------------------------


def sample_goe(N: int, g: float, seed) -> np.ndarray:
    """GOE draw with off-diagonal variance ``g^2/N`` and diagonal variance ``2 g^2/N``.

    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if N < 2:
        raise ParameterError(f"N must be >= 2, got {N}")
    if g < 0:
        raise ParameterError(f"g must be >= 0, got {g}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(int(seed))
    a = rng.standard_normal((N, N)) * (g / math.sqrt(N))
    return (a + a.T) / math.sqrt(2.0)


def build_rmt_model(params: RmtParams, realization: int = 0, stream: tuple = ()):
    """Return ``(H0, V)``: the diagonal ladder and a GOE perturbation (dense).

    The perturbation is drawn from ``make_rng(params.seed, *stream, realization)``.
    """
    H0 = np.diag(params.energies)
    V = sample_goe(params.dimension, params.coupling, make_rng(params.seed, *stream, realization))
    return H0, V


def make_parity_observables(N: int) -> tuple[ObservableMatrix, ObservableMatrix]:
    """``O_odd`` (1 on odd levels, else 0) and ``O_sym`` (+1 odd, -1 even)."""
    if N < 2:
        raise ParameterError(f"N must be >= 2, got {N}")
    odd = (np.arange(N) % 2 == 0).astype(float)
    energies = np.arange(1, N + 1) / N

    def wrap(diag):
        return ObservableMatrix(
            sp.diags(diag, format="csr"), frozenset({0}), {0: 0.0}, energies
        )

    return wrap(odd), wrap(2.0 * odd - 1.0)


# -- spin chain ------------------------------------------------------------


@dataclass(frozen=True)
class SpinChain:
    params: SpinChainParams
    H_S: sp.csr_matrix
    H_B: sp.csr_matrix
    H_SB: sp.csr_matrix

    @property
    def basis(self) -> SpinBasis:
        return SpinBasis(self.params.n_spins)

    @property
    def H0(self) -> sp.csr_matrix:
        return (self.H_S + self.H_B).tocsr()

    @property
    def H(self) -> sp.csr_matrix:
        return (self.H_S + self.H_B + self.H_SB).tocsr()


def _bath_terms(p: SpinChainParams, first: int, last: int):
    terms = []
    for j in range(first, last + 1):
        terms.append((p.B_z_B, [("z", j)]))
        terms.append((p.B_x_B, [("x", j)]))
    for j in range(first, last):
        terms.append((p.J_z, [("z", j), ("z", j + 1)]))
        terms.append((p.J_x, [("plus", j), ("minus", j + 1)]))
        terms.append((p.J_x, [("minus", j), ("plus", j + 1)]))
    return [t for t in terms if t[0] != 0.0]


def build_spin_chain(params: SpinChainParams) -> SpinChain:
    """Assemble ``H_S``, ``H_B`` and ``H_SB`` on the full ``2^N`` space."""
    p = params
    basis = SpinBasis(p.n_spins)
    H_S = operator_product_sum(
        [t for t in [(p.B_z_S, [("z", 1)]), (p.B_x_S, [("x", 1)])] if t[0] != 0.0], basis
    )
    H_B = operator_product_sum(_bath_terms(p, 2, p.n_spins), basis)
    H_SB = operator_product_sum(
        [
            t
            for t in [
                (p.J_z_SB, [("z", 1), ("z", p.n_m)]),
                (p.J_x_SB, [("plus", 1), ("minus", p.n_m)]),
                (p.J_x_SB, [("minus", 1), ("plus", p.n_m)]),
            ]
            if t[0] != 0.0
        ],
        basis,
    )
    return SpinChain(p, H_S, H_B, H_SB)


def bath_hamiltonian(params: SpinChainParams) -> sp.csr_matrix:
    """``H_B`` on the bath factor alone (``2^(N-1)`` dimensional, sites 2..N)."""
    bath = SpinBasis(params.n_spins - 1)
    shifted = [
        (c, [(kind, site - 1) for kind, site in string])
        for c, string in _bath_terms(params, 2, params.n_spins)
    ]
    return operator_product_sum(shifted, bath)


def system_hamiltonian(params: SpinChainParams) -> np.ndarray:
    """2x2 ``H_S`` on the system spin."""
    return np.array(
        [[params.B_z_S, params.B_x_S], [params.B_x_S, -params.B_z_S]], dtype=float
    )


def observable_in_basis(
    O, vectors: np.ndarray, energies: np.ndarray, tol: float = 1e-10
) -> ObservableMatrix:
    """Rotate ``O`` into the orthonormal basis ``vectors`` and record its bands.

    Entries below ``tol * max|O|`` are dropped.  Band energies are the mean
    energy difference ``E[a + n] - E[a]`` over the stored entries of band ``n``.
    """
    dense = O.toarray() if sp.issparse(O) else np.asarray(O)
    rotated = vectors.T @ dense @ vectors
    scale = np.abs(rotated).max()
    rotated[np.abs(rotated) <= tol * scale] = 0.0
    mat = sp.csr_matrix(rotated)
    coo = mat.tocoo()
    offsets = coo.col - coo.row
    band_energies = {}
    for n in np.unique(offsets):
        sel = offsets == n
        band_energies[int(n)] = float(np.mean(energies[coo.col[sel]] - energies[coo.row[sel]]))
    return ObservableMatrix(mat, frozenset(band_energies), band_energies, np.asarray(energies))


def noninteracting_basis(params: SpinChainParams, bath_eig) -> tuple[np.ndarray, np.ndarray]:
    """Eigenbasis of ``H0 = H_S + H_B`` as (energies, vectors), system-index major.

    Column ``s * dim_B + b`` is ``|s>_S |b>_B`` with ``s`` ordered by ascending
    system energy.  Vectors are in the computational basis of the full chain.
    """
    e_s, u_s = np.linalg.eigh(system_hamiltonian(params))
    energies = (e_s[:, None] + bath_eig.energies[None, :]).ravel()
    vectors = np.kron(u_s, bath_eig.vectors)
    return energies, vectors


def system_observable_noninteracting(kind: str, params: SpinChainParams, bath_energies) -> ObservableMatrix:
    """System Pauli ``kind`` in the product eigenbasis of :func:`noninteracting_basis`.

    Equivalent to :func:`observable_in_basis` on ``system_operator(kind)`` but
    built as ``(u_s^T sigma u_s) (x) 1_B`` without dense rotations.
    """
    e_s, u_s = np.linalg.eigh(system_hamiltonian(params))
    sigma = pauli_operator(kind, 1, SpinBasis(1)).toarray()
    small = u_s.T @ sigma @ u_s
    small[np.abs(small) <= 1e-14] = 0.0
    bath_energies = np.asarray(bath_energies)
    dim_b = bath_energies.size
    mat = sp.kron(sp.csr_matrix(small), sp.identity(dim_b, format="csr"), format="csr")
    mat.eliminate_zeros()
    energies = (e_s[:, None] + bath_energies[None, :]).ravel()
    bands, band_energies = set(), {}
    for i in range(2):
        for j in range(2):
            if small[i, j] != 0:
                n = (j - i) * dim_b
                bands.add(n)
                band_energies[n] = float(e_s[j] - e_s[i])
    return ObservableMatrix(mat, frozenset(bands), band_energies, energies)


# -- initial states --------------------------------------------------------


def rmt_basis_state(alpha0: int, N: int) -> np.ndarray:
    return basis_state(alpha0, N)


def system_up_bath_eigenstate(bath_eig, alpha: int) -> np.ndarray:
    """``|up>_S |phi_alpha>_B`` in the computational basis of the full chain."""
    if bath_eig is None:
        raise ParameterError("bath eigensystem required for bath-eigenstate initial states")
    if not 0 <= alpha < bath_eig.energies.size:
        raise ParameterError(f"bath eigenstate index {alpha} out of range")
    return check_state(np.kron([1.0, 0.0], bath_eig.vectors[:, alpha]))


def product_pattern_state(pattern: str) -> np.ndarray:
    return product_state(pattern, SpinBasis(len(pattern)))


def initial_state(kind: str, **context) -> np.ndarray:
    """Dispatch on ``kind``:

    * ``rmt_basis_state`` -- needs ``alpha0`` and ``N``
    * ``system_up_times_bath_eigenstate`` -- needs ``bath_eig`` and ``alpha``
    * ``product_up_down_pattern`` -- needs ``pattern`` such as ``"uddd"``
    """
    if kind == "rmt_basis_state":
        return rmt_basis_state(context["alpha0"], context["N"])
    if kind == "system_up_times_bath_eigenstate":
        return system_up_bath_eigenstate(context.get("bath_eig"), context["alpha"])
    if kind == "product_up_down_pattern":
        return product_pattern_state(context["pattern"])
    raise ParameterError(f"unknown initial state kind {kind!r}")


def system_operator(kind: str, params: SpinChainParams) -> sp.csr_matrix:
    """Pauli ``kind`` on the system spin, full chain."""
    return pauli_operator(kind, 1, SpinBasis(params.n_spins))
