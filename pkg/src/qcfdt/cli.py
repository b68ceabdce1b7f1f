"""Command-line entry point ``qcfdt``.

Subcommands: ``run``, ``validate``, ``oracle-check``, ``timedep`` and
``cache {clear,stats}``.  Exit codes: 0 success, 1 invalid configuration,
2 runtime failure, 3 failed oracle check.  Machine-readable summaries go to
stdout (JSON, one object per invocation, or one line per oracle check);
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .cache import EigenCache, default_cache_dir
from .config import ConfigError, load_config
from .experiments import plan, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_ORACLE = 0, 1, 2, 3

log = logging.getLogger("qcfdt")


def _common(p):
    p.add_argument("--seed", type=int, help="override [ensemble] seed")
    p.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    p.add_argument("--out-dir", help="output directory (overrides [output] out_dir)")
    p.add_argument("--budget-gb", type=float, help="memory budget (overrides [budget] memory_gb)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcfdt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("run", "execute an experiment config"),
        ("validate", "check a config without running it"),
        ("timedep", "emit measured, free and predicted time series for a time_dependence config"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        _common(p)

    p = sub.add_parser("oracle-check", help="compare four-point correlators with Monte Carlo")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--realizations", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tuples", type=int, default=20)
    p.add_argument("--coupling", type=float, default=None)

    p = sub.add_parser("cache", help="manage the eigensystem cache")
    p.add_argument("action", choices=["clear", "stats"])
    return parser


def _load(args):
    return load_config(args.config, seed=args.seed, threads=args.threads, out_dir=args.out_dir,
                       budget_gb=args.budget_gb, cache_dir=default_cache_dir())


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def cmd_validate(args) -> int:
    cfg = _load(args)
    summary = plan(cfg.spec)
    summary.pop("labels")
    _emit({"valid": summary["within_budget"], **summary})
    if not summary["within_budget"]:
        print(f"memory estimate {summary['memory_bytes']} bytes exceeds budget", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_run(args, require_kind=None) -> int:
    cfg = _load(args)
    if require_kind and cfg.spec.kind != require_kind:
        print(f"config kind is {cfg.spec.kind!r}, expected {require_kind!r}", file=sys.stderr)
        return EXIT_INVALID
    report = run_experiment(cfg.spec)
    out_dir = cfg.out_dir or "qcfdt-out"
    files = report.write(out_dir)
    _emit({
        "kind": cfg.spec.kind,
        "rows": len(report.rows),
        "flagged": sum(1 for r in report.rows if r["flags"]),
        "files": [str(f) for f in files],
        "config_hash": report.provenance["config_hash"],
    })
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import DEFAULT_COUPLING, correlator_check

    coupling = args.coupling if args.coupling is not None else DEFAULT_COUPLING
    checks = correlator_check(args.n, args.realizations, args.seed, args.tuples, coupling)
    for c in checks:
        sys.stdout.write(c.line() + "\n")
    failed = sum(not c.passed() for c in checks)
    sys.stdout.write(f"{'PASS' if failed == 0 else 'FAIL'} summary {len(checks) - failed}/{len(checks)}\n")
    return EXIT_OK if failed == 0 else EXIT_ORACLE


def cmd_cache(args) -> int:
    cache = EigenCache(default_cache_dir())
    if args.action == "stats":
        _emit(cache.stats())
    else:
        _emit({"removed": cache.clear(), "directory": str(cache.directory)})
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "timedep":
            return cmd_run(args, require_kind="time_dependence")
        if args.command == "oracle-check":
            return cmd_oracle(args)
        return cmd_cache(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # runtime failures map to one exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
