import numpy as np
import pytest

from qcfdt.models import SpinChainParams, build_spin_chain
from qcfdt.spectral import diagonalize

# reference coupling set for the 12-spin fixture
REFERENCE_COUPLINGS = dict(B_z_S=0.8, J_z=0.0, J_x=1.0, B_z_B=0.0, B_x_B=0.3, J_x_SB=0.4, J_z_SB=0.2, n_m=5)


@pytest.fixture(scope="session")
def chain12():
    """12-spin chain at the reference couplings with its full eigensystem."""
    params = SpinChainParams(12, **REFERENCE_COUPLINGS)
    chain = build_spin_chain(params)
    return params, chain, diagonalize(chain.H, basis_tag="computational")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
