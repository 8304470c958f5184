"""Command line entry point: ``sqkd run`` and ``sqkd list-attacks``.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 configuration error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .attacks import CATALOG
from .experiment import ConfigError, ExperimentConfig, load_config, run_experiment

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(target: dict, key: str, value):
    parts = key.split(".")
    for p in parts[:-1]:
        target = target.setdefault(p, {})
        if not isinstance(target, dict):
            raise ConfigError(f"--param {key}: '{p}' is not a mapping")
    target[parts[-1]] = value


def build_parser():
    parser = argparse.ArgumentParser(prog="sqkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment")
    run.add_argument("--config", metavar="PATH")
    run.add_argument("--variant", choices=["randomization", "measure-resend"])
    run.add_argument("--attack", metavar="NAME")
    run.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                     help="attack parameter; dotted keys nest, values parse as JSON when possible")
    run.add_argument("--pairs", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--out", metavar="PATH")
    run.add_argument("--trace", metavar="PATH")
    run.add_argument("--format", choices=["json", "csv"])
    run.add_argument("--check-fraction", type=float)
    run.add_argument("--ctrl-threshold", type=float)
    run.add_argument("--sift-threshold", type=float)
    run.add_argument("--bell-kind", choices=["phi+", "phi-", "psi+", "psi-"])
    run.add_argument("--workers", type=int)

    sub.add_parser("list-attacks", help="show the attack catalog")
    return parser


def config_from_args(args) -> ExperimentConfig:
    """Merge defaults, the config file and flags (flag > file > default)."""
    if args.config:
        base = load_config(args.config).to_dict()
    else:
        base = ExperimentConfig(protocol={"n_pairs": 100}).to_dict()
    proto = base["protocol"]
    for flag, key in (("pairs", "n_pairs"), ("variant", "variant"),
                      ("check_fraction", "sift_check_fraction"),
                      ("ctrl_threshold", "ctrl_error_threshold"),
                      ("sift_threshold", "sift_error_threshold"),
                      ("bell_kind", "bell_kind")):
        v = getattr(args, flag)
        if v is not None:
            proto[key] = v
    if args.attack is not None and args.attack != base["attack"]["name"]:
        base["attack"] = {"name": args.attack, "params": {}}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        _set_dotted(base["attack"]["params"], key, _parse_value(value))
    for flag, key in (("trials", "trials"), ("seed", "master_seed"), ("workers", "workers")):
        v = getattr(args, flag)
        if v is not None:
            base[key] = v
    for flag, key in (("out", "results_path"), ("trace", "trace_path"), ("format", "format")):
        v = getattr(args, flag)
        if v is not None:
            base["output"][key] = v
    return ExperimentConfig.from_dict(base)


def list_attacks(stream=None):
    stream = sys.stdout if stream is None else stream
    for name, entry in CATALOG.items():
        print(name, file=stream)
        print(f"  variants:    {', '.join(entry['variants'])}", file=stream)
        print(f"  predictions: {entry['predictions']}", file=stream)
        if entry["schema"]:
            print("  parameters:", file=stream)
            for key, desc in entry["schema"].items():
                if isinstance(desc, dict):
                    print(f"    {key}:", file=stream)
                    for k2, d2 in desc.items():
                        print(f"      {k2}: {d2}", file=stream)
                else:
                    print(f"    {key}: {desc}", file=stream)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-attacks":
        list_attacks()
        return EXIT_OK
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(config)
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(report.theory.to_table())
    return EXIT_OK if report.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
