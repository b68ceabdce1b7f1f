"""Many-spin operators and states in the tensor-product (computational) basis.

Basis convention: the basis index encodes the spin configuration bit-wise with
site 1 as the most significant bit, and bit value 0 meaning spin up.  So on
three spins the pattern up-down-down is ``0b011 == 3``.  Operators are
``scipy.sparse`` CSR matrices; every Hamiltonian and observable built here is
real symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SpinBasis",
    "ParameterError",
    "ConstructionError",
    "pauli_operator",
    "operator_product_sum",
    "expectation",
    "basis_state",
    "product_state",
    "is_symmetric",
    "check_state",
]


class ParameterError(ValueError):
    """Invalid model or operator parameters."""


class ConstructionError(ValueError):
    """An assembled operator violates a structural requirement."""


_SINGLE_SITE = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]]),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]]),
    # up = index 0, so sigma_+ = |up><down|
    "plus": np.array([[0.0, 1.0], [0.0, 0.0]]),
    "minus": np.array([[0.0, 0.0], [1.0, 0.0]]),
}


@dataclass(frozen=True)
class SpinBasis:
    n_spins: int

    def __post_init__(self):
        if self.n_spins < 1:
            raise ParameterError(f"n_spins must be positive, got {self.n_spins}")

    @property
    def dimension(self) -> int:
        return 2**self.n_spins

    def configuration(self, index: int) -> tuple[int, ...]:
        """Spin values (+1 up, -1 down) for sites 1..n of basis ``index``."""
        if not 0 <= index < self.dimension:
            raise ParameterError(f"basis index {index} out of range")
        bits = format(index, f"0{self.n_spins}b")
        return tuple(1 if b == "0" else -1 for b in bits)

    def index(self, configuration: Sequence[int]) -> int:
        """Inverse of :meth:`configuration`."""
        if len(configuration) != self.n_spins:
            raise ParameterError("configuration length does not match n_spins")
        idx = 0
        for s in configuration:
            if s not in (1, -1):
                raise ParameterError(f"spin values must be +1/-1, got {s}")
            idx = (idx << 1) | (0 if s == 1 else 1)
        return idx


def _check_site(site: int, basis: SpinBasis):
    if not 1 <= site <= basis.n_spins:
        raise ParameterError(f"site {site} outside 1..{basis.n_spins}")


def pauli_operator(kind: str, site: int, basis: SpinBasis) -> sp.csr_matrix:
    """Single-site Pauli operator on ``site`` (1-based) embedded with identities.

    ``kind`` is one of ``x, y, z, plus, minus``.  Only ``y`` is complex.
    """
    if kind not in _SINGLE_SITE:
        raise ParameterError(f"unknown Pauli kind {kind!r}")
    _check_site(site, basis)
    left = sp.identity(2 ** (site - 1), format="csr")
    right = sp.identity(2 ** (basis.n_spins - site), format="csr")
    op = sp.kron(sp.kron(left, sp.csr_matrix(_SINGLE_SITE[kind])), right, format="csr")
    op.eliminate_zeros()
    if kind != "y":
        op = op.real.astype(np.float64)
    return op


def is_symmetric(matrix, atol: float = 0.0) -> bool:
    """Exact (default) or tolerant symmetry check for sparse or dense input."""
    if sp.issparse(matrix):
        diff = abs(matrix - matrix.T)
        return diff.nnz == 0 or diff.max() <= atol
    matrix = np.asarray(matrix)
    return bool(np.all(np.abs(matrix - matrix.T) <= atol))


def operator_product_sum(
    terms: Iterable[tuple[float, Sequence[tuple[str, int]]]], basis: SpinBasis
) -> sp.csr_matrix:
    """Sum of Pauli strings ``coefficient * prod(op(kind, site))``.

    The result must be real symmetric; a non-Hermitian assembly (for example a
    hopping term without its conjugate) raises :class:`ConstructionError`.
    """
    dim = basis.dimension
    total = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for coefficient, string in terms:
        term = sp.identity(dim, format="csr", dtype=np.complex128)
        for kind, site in string:
            term = term @ pauli_operator(kind, site, basis)
        total = total + coefficient * term
    if total.nnz and abs(total.imag).max() > 0:
        raise ConstructionError("assembled operator has imaginary entries")
    total = total.real.astype(np.float64).tocsr()
    total.eliminate_zeros()
    if not is_symmetric(total):
        raise ConstructionError("assembled operator is not symmetric")
    return total


def expectation(state, op) -> float:
    """``<psi|op|psi>`` for a real or complex state; imaginary residue must vanish."""
    state = np.asarray(state)
    if state.shape[0] != op.shape[0]:
        raise ParameterError(
            f"state dimension {state.shape[0]} does not match operator {op.shape[0]}"
        )
    value = np.vdot(state, op @ state)
    if abs(value.imag) > 1e-10:
        raise ConstructionError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def check_state(state) -> np.ndarray:
    """Return ``state`` as an array after asserting unit norm (1e-12)."""
    state = np.asarray(state)
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > 1e-12:
        raise ParameterError(f"state is not normalized (norm {norm!r})")
    return state


def basis_state(index: int, dimension: int) -> np.ndarray:
    if not 0 <= index < dimension:
        raise ParameterError(f"basis index {index} out of range 0..{dimension - 1}")
    psi = np.zeros(dimension)
    psi[index] = 1.0
    return psi


def product_state(pattern: str, basis: SpinBasis) -> np.ndarray:
    """Computational basis vector for a pattern such as ``"udd"`` (u = up, d = down)."""
    spins = []
    for ch in pattern:
        if ch in "u+":
            spins.append(1)
        elif ch in "d-":
            spins.append(-1)
        else:
            raise ParameterError(f"bad spin symbol {ch!r} in pattern {pattern!r}")
    return basis_state(basis.index(spins), basis.dimension)
