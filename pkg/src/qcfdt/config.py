"""INI-style run configuration.

Grammar: standard INI sections ``[model]``, ``[ensemble]``, ``[analysis]``,
``[output]`` and ``[budget]`` holding ``key = value`` lines.  ``#`` and ``;``
start comments.  A value is parsed as an int, then a float, then a boolean
(``true``/``false``), and is otherwise kept as a string; comma-separated
values become lists.  ``[model] kind`` selects the experiment, and the other
``[model]`` keys are validated against that kind.  Unknown sections and keys
are errors.

Example::

    [model]
    kind = rmt_fdt
    N = 2000
    g = 0.05, 0.1
    observables = odd, sym

    [ensemble]
    n_realizations = 20
    n_initial_states = 1
    seed = 1
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .experiments import AnalysisSpec, EnsembleSpec, ExperimentSpec, default_threads
from .hilbert import ParameterError

SECTION_KEYS = {
    "ensemble": {"n_realizations", "n_initial_states", "seed"},
    "analysis": {"epsilon", "t_fit", "n_times", "window", "n_window", "dos_window_factor"},
    "output": {"out_dir", "use_cache"},
    "budget": {"memory_gb", "threads"},
}
REQUIRED_SECTIONS = {"model"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    spec: ExperimentSpec
    out_dir: str | None
    use_cache: bool


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    return text


def read_config(path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (B_z_S)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    sections = {name: {k: parse_value(v) for k, v in parser[name].items()} for name in parser.sections()}
    unknown = sorted(set(sections) - set(SECTION_KEYS) - REQUIRED_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    for name in REQUIRED_SECTIONS:
        if name not in sections:
            raise ConfigError(f"missing required section [{name}]")
    for name, allowed in SECTION_KEYS.items():
        extra = sorted(set(sections.get(name, {})) - allowed)
        if extra:
            raise ConfigError(f"[{name}] unknown key(s): {', '.join(extra)}")
    return sections


def build_run_config(sections: dict, seed=None, threads=None, out_dir=None,
                     budget_gb=None, cache_dir=None) -> RunConfig:
    """Turn parsed sections plus command-line overrides into a :class:`RunConfig`."""
    model = dict(sections["model"])
    if "kind" not in model:
        raise ConfigError("[model] missing required key(s): kind")
    kind = model.pop("kind")
    ens = dict(sections.get("ensemble", {}))
    if seed is not None:
        ens["seed"] = seed
    analysis = dict(sections.get("analysis", {}))
    if "window" in analysis:
        w = analysis["window"]
        if not isinstance(w, list) or len(w) != 2:
            raise ConfigError("[analysis] window must be two numbers: start, stop")
        analysis["window"] = tuple(float(x) for x in w)
    budget = sections.get("budget", {})
    output = sections.get("output", {})
    try:
        spec = ExperimentSpec(
            kind=kind,
            model=model,
            ensemble=EnsembleSpec(**ens),
            analysis=AnalysisSpec(**analysis),
            budget_gb=float(budget_gb if budget_gb is not None else budget.get("memory_gb", 4.0)),
            threads=int(threads if threads is not None else budget.get("threads", default_threads())),
            cache_dir=str(cache_dir) if cache_dir is not None and output.get("use_cache", False) else None,
        )
    except (ParameterError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(spec, out_dir if out_dir is not None else output.get("out_dir"),
                     bool(output.get("use_cache", False)))


def load_config(path, **overrides) -> RunConfig:
    return build_run_config(read_config(path), **overrides)
