"""Command line entry point.

    fedat run --config exp.yaml [--out DIR] [--seed N] [--workers N]
    fedat synth-data --config exp.yaml --out data.csv
    fedat plots --run DIR

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 some matrix cells failed.
"""

from __future__ import annotations

import argparse
import logging
import sys

from fedat.config import parse_config
from fedat.data import synthesize_cert_like, write_csv
from fedat.errors import ConfigError, FedATError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("fedat")


def _cmd_run(args) -> int:
    from fedat.experiment import run_matrix

    spec = parse_config(args.config)
    if args.seed is not None:
        spec = spec.with_seeds([args.seed])
    if args.workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {args.workers}")
    outcomes = run_matrix(spec, args.out, workers=args.workers)
    failed = sum(not o.ok for o in outcomes)
    out = args.out or spec.out
    print(f"{len(outcomes) - failed}/{len(outcomes)} runs completed; summary at {out}/summary.csv")
    if failed == len(outcomes):
        return EXIT_RUNTIME
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_synth(args) -> int:
    spec = parse_config(args.config)
    if spec.dataset.source != "synth":
        raise ConfigError("dataset.source: synth-data needs a synthetic dataset section")
    ds = synthesize_cert_like(spec.synth)
    write_csv(ds, args.out)
    print(f"wrote {ds.n_samples} rows x {ds.n_features} features to {args.out}")
    return EXIT_OK


def _cmd_plots(args) -> int:
    from fedat.experiment import emit_plots_data

    for path in emit_plots_data(args.run):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedat", description="Federated adversarial training experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log every round")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment matrix of a config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory (default: eval.out)")
    run.add_argument("--seed", type=int, default=None, help="replace eval.seeds with this one seed")
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=_cmd_run)

    synth = sub.add_parser("synth-data", help="write the configured synthetic dataset as CSV")
    synth.add_argument("--config", required=True)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=_cmd_synth)

    plots = sub.add_parser("plots", help="emit long-format plot data for a run or matrix directory")
    plots.add_argument("--run", required=True)
    plots.set_defaults(func=_cmd_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FedATError, OSError, FloatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
