"""Command line entry point: ``lrdlab <experiment> [--config PATH] [options]``.

Exit codes: 0 success, 1 check failure, 2 invalid config, 3 numerical error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from lrdlab.config import EXPERIMENTS, ExperimentConfig
from lrdlab.errors import InvalidArgumentError, NumericalError
from lrdlab.experiments import ResultBundle, run_experiment
from lrdlab.output import dump_json, table_to_csv, write_atomic

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("lrdlab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrdlab", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="JSON config file (unknown keys are rejected)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--no-plots", action="store_true", help="skip SVG output")
    parser.add_argument("--filter", help="comma-separated verification checks to run (oracle-suite)")
    parser.add_argument("--workers", type=int, help="worker threads for sweeps and Monte Carlo")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        data = ExperimentConfig.load(args.config).to_dict()
    data["experiment"] = args.experiment
    overrides = {"seed": args.seed, "out": None if args.out is None else str(args.out),
                 "filter": args.filter, "workers": args.workers}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_plots:
        data["plots"] = False
    return ExperimentConfig.from_dict(data)


def write_bundle(bundle: ResultBundle, out_dir: Path) -> list[Path]:
    """Write tables, plots and ``meta.json``; run-specific facts go to ``run.json``."""
    out_dir = Path(out_dir)
    written = []
    for name, table in bundle.tables.items():
        write_atomic(out_dir / name, table_to_csv(table))
        written.append(out_dir / name)
    for name, svg in bundle.plots.items():
        write_atomic(out_dir / name, svg)
        written.append(out_dir / name)
    checks = [dataclasses.asdict(c) for c in bundle.checks]
    write_atomic(out_dir / "meta.json", dump_json({**bundle.meta_document(), "checks": checks}))
    write_atomic(out_dir / "run.json", dump_json({"timestamp": datetime.now(timezone.utc).isoformat()}))
    written += [out_dir / "meta.json", out_dir / "run.json"]
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = resolve_config(args)
    except InvalidArgumentError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    try:
        bundle = run_experiment(config)
    except InvalidArgumentError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_bundle(bundle, Path(config.out))
    for c in bundle.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<22} worst={c.worst:.3e} tol={c.tolerance:g} n={c.instances}")
    if bundle.status == "warning":
        print(f"warning: {bundle.summary.get('warning')}", file=sys.stderr)
    log.info(json.dumps(bundle.summary, default=str))
    print(f"{config.experiment}: {bundle.status} -> {config.out}")
    return EXIT_CHECK_FAILED if bundle.status == "failed" else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
