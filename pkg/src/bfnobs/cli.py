"""Command-line entry point: ``bfnobs run|plot|template``."""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import sys
from pathlib import Path

from bfnobs.config import KINDS, ConfigError, ExperimentConfig, parse_config, serialize, validate
from bfnobs.experiments import OUTPUT_ROOT_ENV, NumericalFailure, run_experiment
from bfnobs.io import PLOT_SERIES, emit_plot_data
from bfnobs.observers import StiffnessError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

EPILOG = f"""\
exit codes:
  0  success
  2  configuration error (every problem is listed)
  3  numerical failure (NaN or overflow detected, unstable explicit step)
  4  input/output error (missing file, unwritable directory)

environment:
  {OUTPUT_ROOT_ENV}  root directory for runs without --out or output_dir
                      (default ./runs; a run goes to <root>/<kind>-seed<seed>)
"""


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bfnobs",
        description="Observers and back-and-forth nudging for periodic transport.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configured experiment", epilog=EPILOG,
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("--config", required=True, type=Path, help="INI experiment config")
    run.add_argument("--out", type=Path, help="output directory (overrides the config)")
    run.add_argument("--seed", type=int, help="random seed (overrides the config)")
    run.add_argument("--threads", type=int, default=1,
                     help="BLAS/FFT threads; 1 (default) gives bit-reproducible output")
    run.add_argument("--mode", choices=("spectral", "linear"), help="transport interpolation")
    run.add_argument("--jobs", type=int, default=1,
                     help="worker processes for parameter sweeps (refinement_study)")

    plot = sub.add_parser("plot", help="write plain-text plot data from a finished run")
    plot.add_argument("--manifest", required=True, type=Path)
    plot.add_argument("--series", required=True, action="append", choices=sorted(PLOT_SERIES))

    tmpl = sub.add_parser("template", help="print a complete default config")
    tmpl.add_argument("--kind", required=True, choices=KINDS)
    return ap


def _thread_limit(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def _run(args) -> int:
    cfg = parse_config(args.config)
    changes = {}
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["grid"] = dataclasses.replace(cfg.grid, interpolation=args.mode)
    cfg = cfg.replace(**changes)
    problems = validate(cfg)
    if args.threads < 1:
        problems.append("--threads: must be >= 1")
    if args.jobs < 1:
        problems.append("--jobs: must be >= 1")
    if problems:
        raise ConfigError(problems)
    with _thread_limit(args.threads):
        manifest = run_experiment(cfg, jobs=args.jobs)
    print(f"wrote {len(manifest.files)} files and manifest.json to {manifest.output_dir}")
    for key, val in manifest.results.items():
        print(f"  {key} = {val}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "template":
            sys.stdout.write(serialize(ExperimentConfig(kind=args.kind)))
            return EXIT_OK
        if args.command == "plot":
            for which in args.series:
                print(emit_plot_data(args.manifest, which))
            return EXIT_OK
        return _run(args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for msg in exc.errors:
            print(f"  {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, StiffnessError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # a module precondition the config validator cannot see in advance
        print(f"configuration error:\n  {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
