import math

import numpy as np
import pytest
import scipy.sparse as sp

from qcfdt.fitting import fit_lorentzian
from qcfdt.hilbert import ParameterError
from qcfdt.models import (
    ObservableMatrix,
    RmtParams,
    SpinChainParams,
    build_rmt_model,
    build_spin_chain,
    make_parity_observables,
    sample_goe,
    system_operator,
)
from qcfdt.spectral import (
    DiagonalizationError,
    EigenSystem,
    SmoothedProfile,
    central_window,
    diagonalize,
    dos_estimate,
    empirical_four_point,
    ldos_profile,
    lorentzian_kernel,
    mean_level_spacing,
    observable_to_eigenbasis,
    overlaps,
    strength_function,
)
from qcfdt.theory import LorentzianFamily, lambda_n


def test_diagonalize_diagonal_matrix():
    eig = diagonalize(np.diag([1.0, 2.0, 3.0]))
    assert np.array_equal(eig.energies, [1.0, 2.0, 3.0])
    assert np.array_equal(eig.vectors, np.eye(3))


def test_diagonalize_pauli_x():
    eig = diagonalize(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(eig.energies, [-1.0, 1.0], atol=1e-15)
    s = 2**-0.5
    assert np.allclose(eig.vectors, [[s, s], [-s, s]], atol=1e-15)


def test_sign_convention_largest_component_positive():
    eig = diagonalize(sample_goe(30, 1.0, 3))
    v = eig.vectors
    pivot = np.argmax(np.abs(v), axis=0)
    assert np.all(v[pivot, np.arange(30)] > 0)


def test_reconstruction_and_orthogonality_goe():
    H = sample_goe(256, 1.0, 11)
    eig = diagonalize(H)
    assert eig.reconstruction_error(H) < 1e-8
    assert eig.orthogonality_error() < 1e-10
    assert np.all(np.diff(eig.energies) >= 0)


def test_diagonalize_accepts_sparse():
    H = sp.diags([1.0, -2.0, 0.5], format="csr")
    assert np.array_equal(diagonalize(H).energies, [-2.0, 0.5, 1.0])


@pytest.mark.parametrize(
    "matrix",
    [np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones((1, 1)), np.ones((2, 3))],
)
def test_diagonalize_rejects_bad_input(matrix):
    with pytest.raises(ParameterError):
        diagonalize(matrix)


def test_diagonalize_reports_nonfinite():
    H = np.eye(3)
    H[0, 0] = np.nan
    with pytest.raises(DiagonalizationError, match="finite=False"):
        diagonalize(H)


def test_overlaps_unperturbed_model_is_identity():
    H0, V = build_rmt_model(RmtParams(8, 0.0))
    c = overlaps(diagonalize(H0 + V))
    assert np.array_equal(np.abs(c), np.eye(8))


def test_overlaps_against_reference_basis():
    H0 = sample_goe(20, 1.0, 1)
    H = H0 + 0.1 * sample_goe(20, 1.0, 2)
    ref, eig = diagonalize(H0), diagonalize(H)
    c = overlaps(eig, ref)
    assert np.allclose(np.linalg.norm(c, axis=0), 1.0, atol=1e-10)
    assert np.allclose(c, ref.vectors.T @ eig.vectors)
    with pytest.raises(ParameterError):
        overlaps(eig, np.eye(5))


def test_kernel_unit_mass():
    x = np.linspace(-2000, 2000, 2_000_001)
    assert np.trapezoid(lorentzian_kernel(x, 0.1), x) == pytest.approx(1.0, abs=1e-4)


def test_ldos_of_eigenstate_is_one_bump():
    eig = diagonalize(sample_goe(40, 1.0, 5))
    mu = 17
    prof = ldos_profile(eig.vectors[:, mu], eig, eps=0.05)
    expected = lorentzian_kernel(prof.energy_grid - eig.energies[mu], 0.05)
    assert np.allclose(prof.values, expected, rtol=1e-10, atol=1e-12)
    assert prof.energy_grid[np.argmax(prof.values)] == pytest.approx(eig.energies[mu], abs=np.diff(prof.energy_grid)[0])


@pytest.mark.parametrize("factor", [3.0, 5.0, 10.0])
def test_ldos_integrates_to_one(factor):
    H0, V = build_rmt_model(RmtParams(300, 0.1, seed=1))
    eig = diagonalize(H0 + V)
    eps = factor * mean_level_spacing(eig)
    grid = np.linspace(eig.energies[0] - 20 * eps, eig.energies[-1] + 20 * eps, 20001)
    prof = ldos_profile(np.ones(300) / math.sqrt(300), eig, eps, grid)
    assert prof.integral() == pytest.approx(1.0, abs=0.02)


def test_ldos_rejects_empty_grid_and_bad_width():
    eig = diagonalize(np.diag([0.0, 1.0]))
    with pytest.raises(ParameterError):
        ldos_profile([1.0, 0.0], eig, 0.1, grid=[])
    with pytest.raises(ParameterError):
        ldos_profile([1.0, 0.0], eig, 0.0)


def test_profile_grid_must_increase():
    with pytest.raises(ParameterError):
        SmoothedProfile(np.array([0.0, 0.0, 1.0]), np.zeros(3), 0.1, "ldos")


def binned_profile(rel, weights, eps, grid, norm):
    """Lorentzian-smoothed histogram of energy offsets ``rel`` (bins of eps/50)."""
    lo, hi = grid[0] - 20 * eps, grid[-1] + 20 * eps
    nbins = int((hi - lo) / (eps / 50))
    hist, edges = np.histogram(rel, bins=nbins, range=(lo, hi), weights=weights)
    centers = 0.5 * (edges[1:] + edges[:-1])
    nz = hist != 0
    values = lorentzian_kernel(grid[:, None] - centers[None, nz], eps) @ hist[nz] / norm
    return SmoothedProfile(grid, values, eps, "ldos")


@pytest.fixture(scope="module")
def rmt_ensemble():
    """50 realizations at N = 1000, g = 0.1: bulk LDOS profile and |O_sym|^2 by offset."""
    N, n_real = 1000, 50
    p = RmtParams(N, 0.1, seed=5)
    alphas = np.arange(450, 550)
    eps = 5.0 / N
    grid = np.linspace(-20 * p.gamma, 20 * p.gamma, 801)
    rels, weights = [], []
    offsets = np.arange(-20, 21)
    mus = np.arange(480, 521)
    osq = np.zeros(offsets.size)
    pred = np.zeros(offsets.size)
    fam = LorentzianFamily(p.omega0, p.gamma)
    sym = make_parity_observables(N)[1].band(0)
    for r in range(n_real):
        H0, V = build_rmt_model(p, r)
        eig = diagonalize(H0 + V)
        w = eig.vectors[alphas, :] ** 2
        rel = eig.energies[None, :] - p.energies[alphas][:, None]
        rels.append(rel.ravel())
        weights.append(w.ravel())
        O_int = (eig.vectors * sym[:, None]).T @ eig.vectors
        for k, d in enumerate(offsets):
            if d == 0:
                continue
            osq[k] += np.mean(O_int[mus, mus + d] ** 2)
            pred[k] += np.mean(lambda_n(fam, 2, eig.energies[mus] - eig.energies[mus + d]))
    profile = binned_profile(np.concatenate(rels), np.concatenate(weights), eps, grid,
                             n_real * alphas.size)
    return p, profile, offsets, osq / n_real, pred / n_real


def test_ensemble_ldos_width_matches_gamma(rmt_ensemble):
    p, profile, *_ = rmt_ensemble
    fit = fit_lorentzian(profile, "ldos")
    assert fit.converged
    assert abs(fit.parameters["gamma"] / p.gamma - 1) < 0.15
    assert abs(fit.parameters["center"]) < 0.1 * p.gamma


def test_single_realization_self_averages(rmt_ensemble):
    # bulk-averaged LDOS of one N = 2000 realization against the ensemble fit
    p_ens, profile, *_ = rmt_ensemble
    ensemble_gamma = fit_lorentzian(profile).parameters["gamma"]
    p = RmtParams(2000, 0.1, seed=8)
    H0, V = build_rmt_model(p)
    eig = diagonalize(H0 + V)
    alphas = np.arange(900, 1100)
    eps = 5.0 / p.dimension
    rel = (eig.energies[None, :] - p.energies[alphas][:, None]).ravel()
    w = (eig.vectors[alphas, :] ** 2).ravel()
    grid = np.linspace(-20 * p.gamma, 20 * p.gamma, 801)
    single = fit_lorentzian(binned_profile(rel, w, eps, grid, alphas.size)).parameters["gamma"]
    assert abs(single / ensemble_gamma - 1) < 0.10


def test_ensemble_offdiagonal_elements_follow_lambda2(rmt_ensemble):
    _, _, offsets, osq, pred = rmt_ensemble
    near = (offsets != 0) & (np.abs(offsets) <= 10)
    assert np.all(np.abs(osq[near] / pred[near] - 1) < 0.2)


def test_strength_function_zero_observable():
    eig = diagonalize(sample_goe(50, 1.0, 2))
    prof = strength_function(np.zeros((50, 50)), eig, eps=0.1)
    assert np.array_equal(prof.values, np.zeros_like(prof.values))


def test_strength_function_integral_is_offdiagonal_weight():
    eig = diagonalize(sample_goe(60, 1.0, 4))
    O = np.diag(np.linspace(-1, 1, 60))
    O_int = observable_to_eigenbasis(sp.csr_matrix(O), eig)
    lo, hi = central_window(eig.energies)
    rows = (eig.energies >= lo) & (eig.energies <= hi)
    expected = np.mean((O_int**2).sum(axis=1)[rows] - np.diagonal(O_int)[rows] ** 2)
    eps = 0.05
    reach = eig.energies[-1] - eig.energies[0] + 2000 * eps  # tails beyond carry ~3e-4
    grid = np.linspace(-reach, reach, 40001)
    prof = strength_function(O_int, eig, eps=eps, grid=grid)
    assert prof.integral() == pytest.approx(expected, rel=2e-3)


def test_strength_function_rmt_diagonal_observable_width():
    N = 1000
    p = RmtParams(N, 0.1, seed=3)
    H0, V = build_rmt_model(p)
    eig = diagonalize(H0 + V)
    sym = make_parity_observables(N)[1]
    O_int = observable_to_eigenbasis(sym, eig)
    grid = np.linspace(-15 * p.gamma, 15 * p.gamma, 601)
    prof = strength_function(O_int, eig, eps=5.0 / N, grid=grid)
    fit = fit_lorentzian(prof, "strength")
    assert abs(fit.parameters["center"]) < 0.1 * p.gamma
    assert abs(fit.parameters["width"] / (2 * p.gamma) - 1) < 0.2


def test_strength_function_empty_window():
    eig = diagonalize(np.diag([0.0, 1.0, 2.0]))
    with pytest.raises(ParameterError):
        strength_function(np.eye(3), eig, 0.1, window=(5.0, 6.0))


def test_central_window_is_middle_half_of_range():
    assert central_window(np.array([-2.0, 0.0, 6.0])) == (0.0, 4.0)


def test_dos_rmt_mid_spectrum():
    N = 1000
    H0, V = build_rmt_model(RmtParams(N, 0.05, seed=1))
    eig = diagonalize(H0 + V)
    assert dos_estimate(eig, 0.5, 0.1) == pytest.approx(N, rel=0.05)


def test_dos_window_leaving_spectrum_rejected():
    eig = diagonalize(np.diag(np.linspace(0, 1, 11)))
    with pytest.raises(ParameterError):
        dos_estimate(eig, 0.95, 0.2)
    with pytest.raises(ParameterError):
        dos_estimate(eig, 0.5, 0.0)
    assert dos_estimate(eig, 0.5, 0.5) == pytest.approx(5 / 0.5)


def test_dos_stable_under_window_doubling(chain12):
    _, _, eig = chain12
    E = 0.5 * (eig.energies[0] + eig.energies[-1])
    d1 = dos_estimate(eig, E, 0.5)
    d2 = dos_estimate(eig, E, 1.0)
    assert abs(d2 / d1 - 1) < 0.10


def test_observable_to_eigenbasis_identity():
    eig = diagonalize(sample_goe(30, 1.0, 7))
    O = ObservableMatrix(sp.identity(30, format="csr"), frozenset({0}), basis_tag="noninteracting")
    assert np.abs(observable_to_eigenbasis(O, eig) - np.eye(30)).max() < 1e-12


def test_observable_to_eigenbasis_basis_mismatch():
    eig = diagonalize(sample_goe(4, 1.0, 7), basis_tag="computational")
    O = ObservableMatrix(sp.identity(4, format="csr"), frozenset({0}))
    with pytest.raises(ParameterError):
        observable_to_eigenbasis(O, eig)
    with pytest.raises(ParameterError):
        observable_to_eigenbasis(sp.identity(5), eig)


def test_sum_rule_sigma_z_eight_spins():
    p = SpinChainParams(8, B_x_S=0.3)
    eig = diagonalize(build_spin_chain(p).H)
    O_int = observable_to_eigenbasis(system_operator("z", p), eig)
    assert np.abs((O_int**2).sum(axis=1) - 1.0).max() < 1e-9


def test_parseval(rng):
    eig = diagonalize(sample_goe(100, 1.0, 3))
    psi = rng.normal(size=100)
    psi /= np.linalg.norm(psi)
    assert abs(np.sum((eig.vectors.T @ psi) ** 2) - 1) < 1e-10


def test_empirical_four_point_sign_invariant(rng):
    cs = [rng.normal(size=(5, 5)) for _ in range(10)]
    flipped = [c * np.sign(rng.normal(size=5))[None, :] for c in cs]
    assert empirical_four_point(cs, 1, 2, (0, 3, 4, 1)) == pytest.approx(
        empirical_four_point(flipped, 1, 2, (0, 3, 4, 1))
    )


def test_eigensystem_dimension():
    eig = EigenSystem(np.zeros(3), np.eye(3))
    assert eig.dimension == 3
