"""Command line front end.

Exit codes: 0 success, 1 a run or validation check failed, 2 config error.
Every run is driven by one YAML config; the subcommand only supplies the
default scenario when the config omits it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, SpikefieldError, UnknownScenario
from .experiments import OUT_ENV, load_config, run_scenario

_DEFAULT_SCENARIO = {
    "simulate": "simulate",
    "meanfield": "observables",
    "chaos": "chaos-rate",
    "persistence": "persistence",
    "sweep": "phase-sweep",
}


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, metavar="PATH",
                     help="YAML run config")
    sub.add_argument("--seed", type=int, default=None, metavar="U64",
                     help="root seed, overrides the config")
    sub.add_argument("--out", default=None, metavar="DIR",
                     help=f"output directory (default: config, then ${OUT_ENV}, then ./runs)")
    sub.add_argument("--workers", type=int, default=None, metavar="COUNT",
                     help="worker processes; results do not depend on this")
    sub.add_argument("--format", dest="fmt", choices=("csv", "jsonl"), default=None,
                     help="event output format where a scenario supports both")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikefield",
        description="Spiking-network simulations, mean-field solvers, and checks.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, scenario in _DEFAULT_SCENARIO.items():
        sub = subs.add_parser(name, help=f"run a config (default scenario: {scenario})")
        _add_run_flags(sub)
    val = subs.add_parser("validate", help="run the built-in acceptance checks")
    val.add_argument("--out", default=None, metavar="DIR",
                     help="where to write validation_report.json (default: cwd)")
    val.add_argument("--criteria", default=None, metavar="LIST",
                     help="comma-separated criterion numbers to run (default: all)")
    return parser


def _run_command(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out,
                      workers=args.workers, fmt=args.fmt,
                      default_scenario=_DEFAULT_SCENARIO[args.command])
    manifest = run_scenario(cfg)
    for name, ok in manifest.checks.items():
        print(f"{'ok  ' if ok else 'FAIL'} {manifest.scenario}: {name}")
    print(f"wrote {os.path.join(cfg.out, 'manifest.json')}")
    return 0 if manifest.all_checks_passed else 1


def _validate_command(args) -> int:
    from .acceptance import run_acceptance  # heavy import, deferred

    wanted = None
    if args.criteria:
        try:
            wanted = sorted({int(tok) for tok in args.criteria.split(",") if tok.strip()})
        except ValueError:
            raise ConfigError([f"--criteria: expected comma-separated integers, got {args.criteria!r}"])
    try:
        results = run_acceptance(wanted)
    except ValueError as exc:
        raise ConfigError([f"--criteria: {exc}"])
    for res in results:
        print(res.line())
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    report = {
        "report": "spikefield-validation",
        "passed": all(r.passed for r in results),
        "criteria": [r.as_dict() for r in results],
    }
    path = os.path.join(out_dir, "validation_report.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    print(f"wrote {path}")
    return 0 if report["passed"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _validate_command(args)
        return _run_command(args)
    except (ConfigError, UnknownScenario) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SpikefieldError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
