"""Command line: ``xxzness run|sweep|check|version``.

Exit codes: 0 success, 1 usage error, 2 failed check, 3 I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from . import __version__
from .errors import NumericalError
from .experiments import FORMATS, PRESETS, UsageError, emit_results, preset_configs, run_config, self_check

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3, 4

log = logging.getLogger("xxzness")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _add_run_options(p):
    p.add_argument("--config", help="YAML/JSON key-value file with configuration fields")
    p.add_argument("--seed", type=_u64)
    p.add_argument("--steps", type=int, help="total bath steps per trajectory, burn-in included")
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--n-sites", type=_ints, dest="n_sites", help="comma-separated chain lengths")
    p.add_argument("--delta", type=_floats, help="comma-separated anisotropies J_z/J_x")
    p.add_argument("--mu", type=_floats, help="comma-separated field strengths")
    p.add_argument("--tau", type=_floats, help="comma-separated mean time lags")
    p.add_argument("--lag", type=lambda s: tuple(s.split(",")), help="time-lag laws, e.g. A,B,C")
    p.add_argument("--J-z", type=float, dest="J_z")
    p.add_argument("--solver", choices=("trajectory", "exact", "analytic"))
    p.add_argument("--large", action="store_true", default=None, help="include N >= 16 points")
    p.add_argument("--out", help="output path; extension replaced by .csv/.json")
    p.add_argument("--format", choices=FORMATS, default="csv")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    parser = _Parser(prog="xxzness", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="run a preset or a config file")
    run.add_argument("--preset", choices=PRESETS)
    _add_run_options(run)

    sweep = sub.add_parser("sweep", parents=[common], help="custom sweep along the given grids")
    _add_run_options(sweep)

    check = sub.add_parser("check", parents=[common], help="run the oracle self-check")
    check.add_argument("--seed", type=_u64, default=0)
    check.add_argument("--steps", type=int, default=6000, help="Monte Carlo steps per trajectory")
    check.add_argument("--inject-fault", choices=("hopping",), default=None, help=argparse.SUPPRESS)

    sub.add_parser("version", parents=[common], help="print the code version")
    return parser


OVERRIDE_KEYS = (
    "seed", "steps", "burn_in", "trajectories", "threads", "n_sites", "delta", "mu", "tau", "lag",
    "J_z", "solver", "large",
)


def resolve_configs(args, preset=None):
    """Preset < config file < command line."""
    file_values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_values = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise UsageError(f"config {args.config} is not valid YAML: {exc}") from exc
        if not isinstance(file_values, dict):
            raise UsageError(f"config {args.config} must be a key-value mapping")
    name = preset or file_values.pop("preset", None) or "custom"
    file_values.pop("preset", None)
    for key in ("n_sites", "delta", "mu", "tau", "lag"):
        if key in file_values and not isinstance(file_values[key], (list, tuple)):
            file_values[key] = [file_values[key]]
    cli = {k: getattr(args, k) for k in OVERRIDE_KEYS if getattr(args, k, None) is not None}
    # an explicit step budget also applies to the large chains
    for key in ("steps", "burn_in"):
        if key in cli:
            cli[f"large_{key}"] = cli[key]
        elif key in file_values:
            file_values.setdefault(f"large_{key}", file_values[key])
    merged = {**file_values, **cli}
    return name, merged, preset_configs(name, merged)


def _run(args, preset) -> int:
    name, merged, configs = resolve_configs(args, preset)
    records = [rec for cfg in configs for rec in run_config(cfg)]
    if not records:
        raise UsageError("the selected grids contain no points (N >= 16 needs --large)")
    paths = emit_results(records, args.out, args.format, config={"preset": name, **_plain(merged)})
    for path in paths:
        log.info("wrote %s", path)
    return EXIT_OK


def _plain(d):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _check(args) -> int:
    results = self_check(fault=args.inject_fault, steps=args.steps, seed=args.seed)
    for res in results:
        print(res.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.verb == "version":
            print(__version__)
            return EXIT_OK
        if args.verb == "check":
            return _check(args)
        if args.verb == "sweep":
            if not any(getattr(args, k) for k in ("n_sites", "delta", "mu", "tau", "lag")) and not args.config:
                raise UsageError("sweep needs at least one grid (--n-sites, --delta, --mu, --tau, --lag) or --config")
            return _run(args, "custom")
        return _run(args, args.preset)
    except UsageError as exc:
        print(f"xxzness: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"xxzness: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"xxzness: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"xxzness: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
