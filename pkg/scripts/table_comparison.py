#!/usr/bin/env python3
"""ClassicalFL vs FedAT and MLP vs SNN-MLP on the synthetic non-IID setup.

Runs the matrix in ``configs/table_comparison.yaml`` (or ``--config``) and
prints final-round macro P/R/F as mean ± sd over seeds.
"""

import argparse
import csv
import logging
import time
from pathlib import Path

from fedat.config import from_dict, parse_config
from fedat.experiment import run_matrix

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "table_comparison.yaml")
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--rounds", type=int, default=None, help="override fed.T")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    spec = parse_config(args.config)
    if args.rounds is not None:
        spec.raw["fed"]["T"] = args.rounds
        spec = from_dict(spec.raw)
    out = Path(args.out or spec.out)
    t0 = time.perf_counter()
    run_matrix(spec, out, workers=args.workers)
    print(f"{len(spec.runs())} runs in {time.perf_counter() - t0:.0f}s -> {out}")

    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'mode':<14}{'model':<9}{'agg':<9}{'E':<3}{'P':>16}{'R':>16}{'F':>16}  status")
    for r in rows:
        cells = "".join(f"{float(r[m + '_mean']):>9.4f}±{float(r[m + '_sd']):.3f}" for m in ("precision", "recall", "f1"))
        print(f"{r['mode']:<14}{r['model']:<9}{r['aggregator']:<9}{r['E']:<3}{cells}  {r['status']}")


if __name__ == "__main__":
    main()
