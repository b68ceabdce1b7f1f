"""Reproducible numerical protocols: build model instances, diagonalize, evolve,
fit the decay width, measure fluctuations and compare with predictions.

One work item is one Hamiltonian; every initial state and observable of that
Hamiltonian is analyzed inside the item so each diagonalization is done once.
Items run on a bounded thread pool and rows are merged by sorted instance key.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cache import EigenCache
from .dynamics import (
    TimeSeries,
    evolve_diagonal_basis,
    evolve_expectation,
    fluctuations_diagonal,
    fluctuations_windowed,
    time_average_diagonal,
)
from .fitting import fit_gamma
from .hilbert import ParameterError
from .models import (
    RmtParams,
    SpinChainParams,
    build_rmt_model,
    build_spin_chain,
    bath_hamiltonian,
    make_parity_observables,
    make_rng,
    noninteracting_basis,
    product_pattern_state,
    rmt_basis_state,
    system_observable_noninteracting,
    system_operator,
    system_up_bath_eigenstate,
)
from .spectral import (
    EigenSystem,
    central_window,
    diagonalize,
    dos_estimate,
    observable_to_eigenbasis,
    strength_function,
)
from .theory import (
    LorentzianFamily,
    band_coefficients,
    microcanonical_average,
    predicted_decay,
    qcfdt_general,
    qcfdt_simple,
    qcfdt_three_peak,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = (
    "rmt_fdt",
    "spinchain_fdt",
    "spinchain_product_state",
    "generalized_fdt_bx",
    "coupling_sweep",
    "time_dependence",
)
ROW_FIELDS = (
    "instance", "N", "g", "gamma_fit", "delta2_measured", "delta2_diag",
    "delta2_pred_simple", "delta2_pred_general", "dos", "time_avg", "mc_avg", "flags",
)
CHAIN_KEYS = ("B_z_S", "B_x_S", "B_z_B", "B_x_B", "J_z", "J_x", "J_z_SB", "J_x_SB", "n_m")

# Per kind: (required model keys, optional model keys).
MODEL_KEYS = {
    "rmt_fdt": ({"N", "g"}, {"observables"}),
    "spinchain_fdt": ({"sizes"}, {"observable", *CHAIN_KEYS}),
    "spinchain_product_state": ({"N", "B_z_S_values"}, {"pattern", "observable", *CHAIN_KEYS}),
    "generalized_fdt_bx": ({"N"}, {"observable", *CHAIN_KEYS}),
    "coupling_sweep": ({"N", "scales"}, {"observable", *CHAIN_KEYS}),
    "time_dependence": ({"family", "N"}, {"g", "observable", "alpha0", "initial", "bath_index", *CHAIN_KEYS}),
}

CENTRAL_WINDOW_RULE = "middle 50% of the spectrum by energy range"
SPIN_FIT_HORIZON = 150.0


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleSpec:
    n_realizations: int = 1
    n_initial_states: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_realizations < 1 or self.n_initial_states < 1:
            raise ParameterError("ensemble counts must be positive")


@dataclass(frozen=True)
class AnalysisSpec:
    """Analysis knobs.  Times in ``window`` are in units of ``1/Gamma_fit``."""

    epsilon: float | None = None
    t_fit: float | None = None
    n_times: int = 2000
    window: tuple = (10.0, 1000.0)
    n_window: int = 8000
    dos_window_factor: float = 10.0

    def __post_init__(self):
        if self.n_times < 50 or self.n_window < 100:
            raise ParameterError("need n_times >= 50 and n_window >= 100")
        if not 0 < self.window[0] < self.window[1]:
            raise ParameterError(f"bad fluctuation window {self.window}")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    model: dict
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    budget_gb: float = 4.0
    threads: int = 1
    cache_dir: str | None = None

    def __post_init__(self):
        validate_model(self.kind, self.model)
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["analysis"]["window"] = list(self.analysis.window)
        d.pop("threads")
        d.pop("cache_dir")
        return d

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(text.encode()).hexdigest()


def validate_model(kind: str, model: dict):
    if kind not in KINDS:
        raise ParameterError(f"unknown experiment kind {kind!r}")
    required, optional = MODEL_KEYS[kind]
    missing = sorted(required - set(model))
    if missing:
        raise ParameterError(f"[model] missing required key(s): {', '.join(missing)}")
    unknown = sorted(set(model) - required - optional)
    if unknown:
        raise ParameterError(f"[model] unknown key(s) for {kind}: {', '.join(unknown)}")
    if kind == "time_dependence":
        if model["family"] not in ("rmt", "spinchain"):
            raise ParameterError(f"[model] family must be rmt or spinchain, got {model['family']!r}")
        if model["family"] == "rmt" and "g" not in model:
            raise ParameterError("[model] missing required key(s): g")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (tuple, set, frozenset)):
        return list(x)
    raise TypeError(f"not serializable: {type(x)}")


@dataclass
class RunReport:
    rows: list
    provenance: dict
    extras: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_json(self) -> str:
        body = {
            "schema_version": SCHEMA_VERSION,
            "provenance": self.provenance,
            "rows": self.rows,
            "extras": self.extras,
        }
        return json.dumps(body, indent=2, sort_keys=True, default=_jsonable)

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "rows.csv", out / "report.json"]
        with open(written[0], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(ROW_FIELDS)
            for row in self.rows:
                w.writerow([_fmt(row[k]) for k in ROW_FIELDS])
        written[1].write_text(self.to_json())
        for name, cols in self.series.items():
            path = out / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                keys = list(cols)
                w.writerow(keys)
                for vals in zip(*(cols[k] for k in keys)):
                    w.writerow([_fmt(v) for v in vals])
            written.append(path)
        return written


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


# -- initial states --------------------------------------------------------


@dataclass(frozen=True)
class InitialState:
    index: int
    energy: float
    vector: np.ndarray


def random_initial_states(kind: str, count: int, energy_window=None, seed: int = 0,
                          bath_eig: EigenSystem | None = None, N: int | None = None,
                          stream: tuple = ()) -> list[InitialState]:
    """Draw ``count`` distinct initial states uniformly from an energy window.

    ``kind`` is ``system_up_times_bath_eigenstate`` (bath eigenstates, needs
    ``bath_eig``) or ``rmt_basis_state`` (levels of the random-matrix ladder,
    needs ``N``).  The window defaults to the middle half of the relevant
    spectrum by energy range.
    """
    if count < 1:
        raise ParameterError("count must be positive")
    if kind == "system_up_times_bath_eigenstate":
        if bath_eig is None:
            raise ParameterError("bath eigensystem required")
        energies = bath_eig.energies
    elif kind == "rmt_basis_state":
        if N is None:
            raise ParameterError("N required for rmt_basis_state")
        energies = np.arange(1, N + 1) / N
    else:
        raise ParameterError(f"unknown initial state kind {kind!r}")
    lo, hi = energy_window if energy_window is not None else central_window(energies)
    candidates = np.flatnonzero((energies >= lo) & (energies <= hi))
    if candidates.size == 0:
        raise ParameterError(f"no states in energy window [{lo}, {hi}]")
    if count > candidates.size:
        raise ParameterError(f"requested {count} states but window holds {candidates.size}")
    rng = make_rng(seed, 1, *stream)
    picks = rng.choice(candidates, size=count, replace=False)
    out = []
    for i in picks:
        i = int(i)
        if kind == "rmt_basis_state":
            vec = rmt_basis_state(i, N)
        else:
            vec = system_up_bath_eigenstate(bath_eig, i)
        out.append(InitialState(i, float(energies[i]), vec))
    return out


# -- work items ------------------------------------------------------------


@dataclass
class _Observable:
    name: str
    model: object  # sparse, in the model basis
    noninteracting: object  # ObservableMatrix in the H0 eigenbasis


@dataclass
class _Problem:
    key: tuple
    label: str
    N: int
    g: float
    dimension: int
    build: object  # () -> (H, nb_energies, nb_vectors or None, observables, states)
    spacing: float | None = None
    gamma_guess: float | None = None
    fields: tuple | None = None  # (B_z_S, B_x_S) when the system field is tilted
    want_strength: bool = False


def _spin_params(model: dict, n_spins: int, **override) -> SpinChainParams:
    kw = {k: model[k] for k in CHAIN_KEYS if k in model}
    kw.update(override)
    return SpinChainParams(n_spins, **kw)


def _spin_builder(params: SpinChainParams, observable: str, states_fn):
    def build():
        chain = build_spin_chain(params)
        bath = diagonalize(bath_hamiltonian(params), "bath")
        nb_e, nb_v = noninteracting_basis(params, bath)
        obs = [_Observable(observable, system_operator(observable, params),
                           system_observable_noninteracting(observable, params, bath.energies))]
        return chain.H, nb_e, nb_v, obs, states_fn(bath)
    return build


def _bath_states(spec: ExperimentSpec, stream: tuple):
    def states(bath):
        picks = random_initial_states(
            "system_up_times_bath_eigenstate", spec.ensemble.n_initial_states,
            seed=spec.ensemble.seed, bath_eig=bath, stream=stream,
        )
        return [(f"alpha={s.index}", s.vector) for s in picks]
    return states


def _problems(spec: ExperimentSpec) -> list[_Problem]:
    m, ens = spec.model, spec.ensemble
    kind = spec.kind
    obs_name = m.get("observable", "z")
    out = []
    if kind == "rmt_fdt":
        N = int(m["N"])
        gs = _as_list(m["g"])
        names = _as_list(m.get("observables", ["odd", "sym"]))
        for gi, g in enumerate(gs):
            params = RmtParams(N, float(g), ens.seed)
            for r in range(ens.n_realizations):
                out.append(_Problem((gi, r), f"g={g:g}/r={r:03d}", N, float(g), N,
                                    _rmt_builder(params, r, gi, names, ens),
                                    spacing=params.omega0, gamma_guess=params.gamma))
    elif kind == "spinchain_fdt":
        for si, n in enumerate(sorted(int(x) for x in _as_list(m["sizes"]))):
            p = _spin_params(m, n)
            out.append(_Problem((si,), f"N={n}", n, 1.0, 2**n,
                                _spin_builder(p, obs_name, _bath_states(spec, (si,)))))
    elif kind == "spinchain_product_state":
        n = int(m["N"])
        pattern = m.get("pattern", "u" + "d" * (n - 1))
        for bi, bz in enumerate(_as_list(m["B_z_S_values"])):
            p = _spin_params(m, n, B_z_S=float(bz))
            out.append(_Problem((bi,), f"B_z_S={float(bz):g}", n, 1.0, 2**n,
                                _spin_builder(p, obs_name, lambda bath, pat=pattern: [
                                    (f"pattern={pat}", product_pattern_state(pat))])))
    elif kind == "generalized_fdt_bx":
        n = int(m["N"])
        overrides = {} if "B_x_S" in m else {"B_x_S": 0.8}
        p = _spin_params(m, n, **overrides)
        out.append(_Problem((0,), f"N={n}", n, 1.0, 2**n,
                            _spin_builder(p, obs_name, _bath_states(spec, (0,))),
                            fields=(p.B_z_S, p.B_x_S), want_strength=True))
    elif kind == "coupling_sweep":
        n = int(m["N"])
        base = _spin_params(m, n)
        for ci, c in enumerate(_as_list(m["scales"])):
            p = base.scaled_coupling(float(c))
            out.append(_Problem((ci,), f"scale={float(c):g}", n, float(c), 2**n,
                                _spin_builder(p, obs_name, _bath_states(spec, (0,)))))
    elif kind == "time_dependence":
        out.append(_time_dependence_problem(spec))
    return out


def _as_list(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _rmt_builder(params: RmtParams, realization: int, group: int, names, ens: EnsembleSpec):
    def build():
        H0, V = build_rmt_model(params, realization, stream=(group,))
        odd, sym = make_parity_observables(params.dimension)
        table = {"odd": odd, "sym": sym}
        obs = []
        for name in names:
            if name not in table:
                raise ParameterError(f"unknown RMT observable {name!r}")
            obs.append(_Observable(name, table[name].matrix, table[name]))
        picks = random_initial_states("rmt_basis_state", ens.n_initial_states, seed=ens.seed,
                                      N=params.dimension, stream=(group, realization))
        states = [(f"alpha={s.index}", s.vector) for s in picks]
        return H0 + V, params.energies, None, obs, states
    return build


def _time_dependence_problem(spec: ExperimentSpec) -> _Problem:
    m, ens = spec.model, spec.ensemble
    n = int(m["N"])
    obs_name = m.get("observable", "sym" if m["family"] == "rmt" else "z")
    if m["family"] == "rmt":
        params = RmtParams(n, float(m["g"]), ens.seed)
        alpha0 = int(m.get("alpha0", n // 2))

        def build():
            H0, V = build_rmt_model(params, 0)
            odd, sym = make_parity_observables(n)
            O = {"odd": odd, "sym": sym}[obs_name]
            return (H0 + V, params.energies, None, [_Observable(obs_name, O.matrix, O)],
                    [(f"alpha={alpha0}", rmt_basis_state(alpha0, n))])
        return _Problem((0,), f"g={params.coupling:g}", n, params.coupling, n, build,
                        spacing=params.omega0, gamma_guess=params.gamma)
    p = _spin_params(m, n)
    initial = m.get("initial", "bath_eigenstate")
    if initial == "product":
        def states(bath):
            pat = "u" + "d" * (n - 1)
            return [(f"pattern={pat}", product_pattern_state(pat))]
    elif "bath_index" in m:
        def states(bath):
            idx = int(m["bath_index"])
            return [(f"alpha={idx}", system_up_bath_eigenstate(bath, idx))]
    else:
        def states(bath):
            s = random_initial_states("system_up_times_bath_eigenstate", 1, seed=ens.seed,
                                      bath_eig=bath)[0]
            return [(f"alpha={s.index}", s.vector)]
    fields = (p.B_z_S, p.B_x_S) if p.B_x_S != 0 else None
    return _Problem((0,), f"N={n}", n, 1.0, 2**n, _spin_builder(p, obs_name, states), fields=fields)


# -- analysis --------------------------------------------------------------


def _fit_series(eig, psi, O, nb_e, amps, O_nb, horizon, n_times, avg, d2):
    times = np.linspace(0.0, horizon, n_times)
    measured = evolve_expectation(eig, psi, O, times)
    free = evolve_diagonal_basis(nb_e, amps, O_nb, times)
    return measured, free, fit_gamma(measured, free, avg, d2)


def _analyze_state(problem: _Problem, spec: ExperimentSpec, eig, H, nb_e, nb_v, ob: _Observable,
                   O_int, state_label, psi):
    an = spec.analysis
    flags = []
    row = {k: float("nan") for k in ROW_FIELDS}
    row.update(instance=f"{problem.label}/{state_label}/O={ob.name}", N=problem.N, g=problem.g)
    amps = psi if nb_v is None else nb_v.T @ psi
    E0 = float(psi @ (H @ psi))
    avg = time_average_diagonal(eig, psi, ob.model)
    d2_diag = fluctuations_diagonal(eig, psi, ob.model, O_int)
    row.update(time_avg=avg, delta2_diag=d2_diag)
    extra = {"E0": E0}

    horizon = an.t_fit
    if horizon is None:
        horizon = 8.0 / problem.gamma_guess if problem.gamma_guess else SPIN_FIT_HORIZON
    try:
        measured, free, fit = _fit_series(eig, psi, ob.model, nb_e, amps, ob.noninteracting,
                                          horizon, an.n_times, avg, d2_diag)
        if an.t_fit is None and horizon < 4.0 / fit.parameters["gamma"]:
            horizon = 8.0 / fit.parameters["gamma"]
            measured, free, fit = _fit_series(eig, psi, ob.model, nb_e, amps, ob.noninteracting,
                                              horizon, an.n_times, avg, d2_diag)
    except (ValueError, RuntimeError) as exc:
        flags.append(f"fit_failed:{type(exc).__name__}")
        row["flags"] = ";".join(flags)
        row["extra"] = extra
        return row, None
    gamma = fit.parameters["gamma"]
    if not fit.converged:
        flags.append("fit_not_converged")
    if not (gamma > 0 and math.isfinite(gamma)):
        flags.append("gamma_invalid")
    extra.update(fit=fit.to_dict(), fit_horizon=horizon)
    row["gamma_fit"] = gamma

    window = (an.window[0] / gamma, an.window[1] / gamma)
    tw = np.linspace(window[0], window[1], an.n_window)
    row["delta2_measured"] = fluctuations_windowed(
        evolve_expectation(eig, psi, ob.model, tw), window, gamma)
    extra["window"] = list(window)

    try:
        dos = dos_estimate(eig, E0, an.dos_window_factor * gamma)
    except ParameterError:
        dos = float("nan")
        flags.append("dos_window_outside_spectrum")
    row["dos"] = dos
    spacing = problem.spacing if problem.spacing is not None else 1.0 / dos
    if math.isfinite(spacing) and gamma > 0:
        fam = LorentzianFamily(spacing, gamma)
        bands = band_coefficients(ob.noninteracting, fam, E0)
        weights = np.square(amps)
        weights = weights / weights.sum()
        row["mc_avg"] = microcanonical_average(ob.noninteracting, 0, fam, E0)
        row["delta2_pred_simple"] = qcfdt_simple(bands.coefficients.get(0, 0.0), spacing, gamma)
        row["delta2_pred_general"] = qcfdt_general(weights, ob.noninteracting.energies, bands, fam)
        extra["band_coefficients"] = {str(k): v for k, v in bands.coefficients.items()}
        if problem.fields is not None and ob.name == "z":
            extra["delta2_pred_three_peak"] = qcfdt_three_peak(
                problem.fields[0], problem.fields[1], gamma, spacing, avg)
    row["flags"] = ";".join(flags)
    row["extra"] = extra
    return row, (measured, free, avg, gamma)


def _strength_peaks(O_int, eig, eps, count=3):
    """Locations of the ``count`` largest local maxima of the strength function."""
    prof = strength_function(O_int, eig, eps=eps)
    v = prof.values
    interior = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])) + 1
    top = interior[np.argsort(v[interior])[::-1][:count]]
    return sorted(float(prof.energy_grid[i]) for i in top), prof


def _run_problem(problem: _Problem, spec: ExperimentSpec, cache: EigenCache | None):
    H, nb_e, nb_v, observables, states = problem.build()
    eig = cache.get_or_compute(H, "model") if cache is not None else diagonalize(H, "model")
    H_mat = H
    rows, extras, series = [], {}, {}
    for oi, ob in enumerate(observables):
        O_int = observable_to_eigenbasis(ob.model, eig)
        if problem.want_strength:
            eps = spec.analysis.epsilon
            if eps is None:
                eps = 0.05
            peaks, prof = _strength_peaks(O_int, eig, eps)
            extras[f"{problem.label}/O={ob.name}/strength_peaks"] = peaks
            extras[f"{problem.label}/O={ob.name}/strength_grid_step"] = float(
                prof.energy_grid[1] - prof.energy_grid[0])
        for si, (label, psi) in enumerate(states):
            row, traces = _analyze_state(problem, spec, eig, H_mat, nb_e, nb_v, ob, O_int, label, psi)
            rows.append(((*problem.key, si, oi), row))
            if spec.kind == "time_dependence" and traces is not None:
                measured, free, avg, gamma = traces
                pred = predicted_decay(free, avg, gamma)
                series["timeseries"] = {
                    "t": measured.times, "measured": measured.values,
                    "free": free.values, "predicted": pred.values,
                }
    return rows, extras, series


def memory_estimate_bytes(dimension: int) -> int:
    return 8 * dimension * dimension * 3


def plan(spec: ExperimentSpec) -> dict:
    """Instance count, largest dimension and memory estimate, without running anything."""
    problems = _problems(spec)
    biggest = max(p.dimension for p in problems)
    need = memory_estimate_bytes(biggest)
    return {
        "kind": spec.kind,
        "hamiltonians": len(problems),
        "labels": [p.label for p in problems],
        "max_dimension": biggest,
        "memory_bytes": need,
        "budget_bytes": int(spec.budget_gb * 1e9),
        "within_budget": need <= spec.budget_gb * 1e9,
        "config_hash": spec.config_hash(),
    }


def run_experiment(spec: ExperimentSpec) -> RunReport:
    """Execute every instance of ``spec`` and collect one row per
    (Hamiltonian, initial state, observable)."""
    problems = _problems(spec)
    biggest = max(p.dimension for p in problems)
    need = memory_estimate_bytes(biggest)
    if need > spec.budget_gb * 1e9:
        raise BudgetExceededError(
            f"dimension {biggest} needs ~{need / 1e9:.2f} GB, budget is {spec.budget_gb:g} GB"
        )
    cache = EigenCache(spec.cache_dir) if spec.cache_dir else None
    threads = min(spec.threads, len(problems))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda p: _run_problem(p, spec, cache), problems))
    else:
        results = []
        for p in problems:
            log.info("running %s", p.label)
            results.append(_run_problem(p, spec, cache))
    keyed, extras, series = [], {}, {}
    for rows, ex, se in results:
        keyed.extend(rows)
        extras.update(ex)
        series.update(se)
    keyed.sort(key=lambda kv: kv[0])
    provenance = {
        "kind": spec.kind,
        "seed": spec.ensemble.seed,
        "config_hash": spec.config_hash(),
        "code_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "spec": spec.to_dict(),
        "decisions": {
            "initial_state_window": CENTRAL_WINDOW_RULE,
            "dos_window": f"{spec.analysis.dos_window_factor:g} * gamma_fit at the initial-state mean energy",
            "fluctuation_window": f"[{spec.analysis.window[0]:g}, {spec.analysis.window[1]:g}] / gamma_fit",
        },
    }
    return RunReport([row for _, row in keyed], provenance, extras, series)


def pearson(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.corrcoef(x, y)[0, 1])


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def default_threads() -> int:
    return os.cpu_count() or 1
