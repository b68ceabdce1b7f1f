"""Monte-Carlo check of the four-point eigenvector correlators against their
closed forms on the random-matrix model.

Two estimators are used.  The *per-tuple* estimator takes one product per
realization at fixed absolute indices around the band center, so the
standard error is over realizations only.  The *pooled* estimator averages
each realization's product over translated copies of a tuple in the bulk before forming the ensemble mean; it is used for the orthogonality
corrections, which are an order ``omega0/Gamma`` smaller than the leading
terms and are otherwise buried in noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import RmtParams, build_rmt_model, make_rng
from .spectral import diagonalize
from .theory import LorentzianFamily, four_point_diag, four_point_offdiag

__all__ = ["TupleCheck", "sample_tuples", "correlator_check", "DEFAULT_COUPLING"]

DEFAULT_COUPLING = 0.15

# Correction-only tuples with the largest predicted magnitude (nearest
# neighbours in energy).  The pooled check must resolve their sign.
CORRECTION_PROBES = (
    ("correction_direct", 1, (0, 0, 1, 1)),
    ("correction_direct", 2, (0, 0, 2, 2)),
    ("correction_direct", 1, (0, 0, -1, -1)),
    ("correction_exchange", 1, (-1, 2, 2, -1)),
    ("correction_exchange", -1, (0, -2, -2, 0)),
)


@dataclass(frozen=True)
class TupleCheck:
    kind: str  # category name
    mu_offset: int  # nu - mu; 0 for the diagonal correlator
    offsets: tuple  # (a0, b0, a, b) relative to mu
    pooled: bool
    empirical: float
    stderr: float
    theory: float

    @property
    def z(self) -> float:
        return (self.empirical - self.theory) / self.stderr if self.stderr > 0 else 0.0

    @property
    def z_zero(self) -> float:
        return self.empirical / self.stderr if self.stderr > 0 else 0.0

    def passed(self, n_se: float = 5.0) -> bool:
        ok = abs(self.z) <= n_se
        if self.pooled and self.theory != 0:
            # the correction must be resolved from zero with the predicted sign
            ok = ok and np.sign(self.empirical) == np.sign(self.theory) and abs(self.z_zero) >= 3
        return bool(ok)

    def line(self, n_se: float = 5.0) -> str:
        tag = "PASS" if self.passed(n_se) else "FAIL"
        mode = "pooled" if self.pooled else "tuple"
        return (
            f"{tag} {mode:6s} {self.kind:20s} d={self.mu_offset:+d} idx={self.offsets} "
            f"empirical={self.empirical:+.4e} theory={self.theory:+.4e} "
            f"se={self.stderr:.2e} z={self.z:+.2f}"
        )


def sample_tuples(seed: int, width: int, count: int = 20):
    """Draw ``count`` relative index tuples covering every pairing pattern.

    Returns ``(kind, nu - mu, (a0, b0, a, b))`` with offsets relative to
    ``mu`` drawn within ``+-width`` levels.
    """
    rng = make_rng(seed, 2)
    w = max(int(width), 2)

    def off():
        return int(rng.integers(-w, w + 1))

    def distinct(*taken):
        while True:
            x = off()
            if x not in taken:
                return x

    plan = (
        ["gaussian_pairing"] * 6 + ["all_equal_offdiag"] * 2 + ["correction_direct"] * 4
        + ["correction_exchange"] * 2 + ["no_coincidence"] * 2 + ["diag_all_equal"]
        + ["diag_pairs"] * 3
    )
    plan = (plan * (count // len(plan) + 1))[:count]
    out = []
    for kind in plan:
        d = distinct(0)
        if kind == "gaussian_pairing":
            a0 = off()
            b0 = distinct(a0)
            out.append((kind, d, (a0, b0, a0, b0)))
        elif kind == "all_equal_offdiag":
            a0 = off()
            out.append((kind, d, (a0, a0, a0, a0)))
        elif kind == "correction_direct":
            a0 = off()
            a = distinct(a0)
            out.append((kind, d, (a0, a0, a, a)))
        elif kind == "correction_exchange":
            a0 = off()
            b0 = distinct(a0)
            out.append((kind, d, (a0, b0, b0, a0)))
        elif kind == "no_coincidence":
            a0 = off()
            b0 = distinct(a0)
            a = distinct(a0, b0)
            b = distinct(a0, b0, a)
            out.append((kind, d, (a0, b0, a, b)))
        elif kind == "diag_all_equal":
            a0 = off()
            out.append((kind, 0, (a0, a0, a0, a0)))
        else:
            a = off()
            b = distinct(a)
            pattern = [(a, a, b, b), (a, b, a, b), (a, b, b, a)][len(out) % 3]
            out.append((kind, 0, pattern))
    return out


def _theory(fam, E, grid, mu, d, idx):
    if d == 0:
        return four_point_diag(fam, E[mu], idx, grid)
    return four_point_offdiag(fam, E[mu], E[mu + d], idx, grid)


def correlator_check(n: int = 256, realizations: int = 200, seed: int = 7, n_tuples: int = 20,
                     coupling: float = DEFAULT_COUPLING, n_shifts: int | None = None,
                     shift_span: int | None = None) -> list[TupleCheck]:
    """Compare empirical and closed-form four-point correlators.

    Returns ``n_tuples`` per-tuple checks followed by pooled checks of the
    fixed correction probes.  The Lorentzian family uses ``omega0 = 1/n`` and
    ``Gamma = pi g^2``; theory values are evaluated with each realization's
    interacting energies for ``mu`` and ``nu`` and ladder energies for the
    basis labels, then averaged like the empirical products.
    """
    params = RmtParams(n, coupling, seed)
    fam = LorentzianFamily(params.omega0, params.gamma)
    grid = params.energies
    width = int(round(params.gamma / params.omega0))
    tuples = sample_tuples(seed, width, n_tuples)
    pooled = list(CORRECTION_PROBES)
    center = n // 2
    span = shift_span if shift_span is not None else n // 6
    if n_shifts is None:
        shifts = np.arange(center - span, center + span + 1)
    else:
        shifts = np.unique(np.linspace(center - span, center + span, n_shifts).astype(int))
    reach = max(abs(x) for _, d, idx in tuples for x in (d, *idx))
    if center - span - reach < 0 or center + span + reach >= n:
        raise ValueError("tuples reach outside the spectrum; increase n or reduce the span")

    emp = np.zeros((realizations, len(tuples)))
    th = np.zeros_like(emp)
    emp_p = np.zeros((realizations, len(pooled)))
    th_p = np.zeros_like(emp_p)
    for r in range(realizations):
        H0, V = build_rmt_model(params, r)
        eig = diagonalize(H0 + V)
        c, E = eig.vectors, eig.energies
        for k, (_, d, rel) in enumerate(tuples):
            mu = center
            idx = tuple(mu + x for x in rel)
            emp[r, k] = c[idx[0], mu] * c[idx[1], mu + d] * c[idx[2], mu] * c[idx[3], mu + d]
            th[r, k] = _theory(fam, E, grid, mu, d, idx)
        for k, (_, d, rel) in enumerate(pooled):
            vals, preds = [], []
            for mu in shifts:
                idx = tuple(int(mu + x) for x in rel)
                vals.append(c[idx[0], mu] * c[idx[1], mu + d] * c[idx[2], mu] * c[idx[3], mu + d])
                preds.append(_theory(fam, E, grid, int(mu), d, idx))
            emp_p[r, k] = np.mean(vals)
            th_p[r, k] = np.mean(preds)

    def summarize(e, t, table, is_pooled):
        out = []
        for k, (kind, d, rel) in enumerate(table):
            se = e[:, k].std(ddof=1) / np.sqrt(realizations)
            out.append(TupleCheck(kind, d, rel, is_pooled, float(e[:, k].mean()), float(se),
                                  float(t[:, k].mean())))
        return out

    return summarize(emp, th, tuples, False) + summarize(emp_p, th_p, pooled, True)
