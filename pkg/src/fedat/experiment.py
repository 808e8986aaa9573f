"""Run matrix: every (mode, model, aggregator, E, seed) cell, per-run artifacts, seed summary.

Per-run directory::

    rounds.csv        round,precision,recall,f1,mean_train_loss  (appended every round)
    timing.csv        round,duration_ms
    augmentation.csv  client,round,class,real_count,synth_count
    effective-config  resolved YAML for this cell alone
    weights.txt       final global weights
    status            "ok" or the failure

Wall-clock time lives in ``timing.csv`` only, so ``rounds.csv`` and
``summary.csv`` are byte-reproducible.
"""

from __future__ import annotations

import csv
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fedat.config import ExperimentSpec, RunKey, write_effective
from fedat.data import Dataset, load_csv, standardize, synthesize_cert_like, train_test_split
from fedat.errors import FedATError
from fedat.federation import _SPLIT, RoundReport, run_federation, stream
from fedat.nn import dumps_weights

log = logging.getLogger(__name__)

ROUND_FIELDS = ("round", "precision", "recall", "f1", "mean_train_loss")
METRICS = ("precision", "recall", "f1", "mean_train_loss")
PLOT_SERIES = {"precision": "P", "recall": "R", "f1": "F", "mean_train_loss": "loss"}


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


@dataclass
class RunOutcome:
    key: RunKey
    ok: bool
    final: dict[str, float] | None
    error: str = ""


def load_dataset(spec: ExperimentSpec) -> Dataset:
    if spec.dataset.source == "csv":
        return load_csv(spec.dataset.path)
    return synthesize_cert_like(spec.synth)


def prepare_data(spec: ExperimentSpec, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split keyed by the run seed, then min-max fitted on train."""
    ds = load_dataset(spec)
    train, test = train_test_split(ds, spec.dataset.test_fraction, stream(seed, _SPLIT))
    train, (test,) = standardize(train, [test])
    return train, test


def run_one(spec: ExperimentSpec, key: RunKey, run_dir) -> RunOutcome:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_effective(spec.single_run(key), run_dir / "effective-config")
    rounds_path = run_dir / "rounds.csv"
    timing_path = run_dir / "timing.csv"
    with rounds_path.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(ROUND_FIELDS)
    with timing_path.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(("round", "duration_ms"))

    def on_round(r: RoundReport) -> None:
        with rounds_path.open("a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                [r.round, _fmt(r.precision), _fmt(r.recall), _fmt(r.f1), _fmt(r.mean_train_loss)]
            )
        with timing_path.open("a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow([r.round, f"{r.duration_ms:.3f}"])

    try:
        train, test = prepare_data(spec, key.seed)
        assignment = [list(row) for row in spec.dataset.assignment] if spec.dataset.assignment else None
        result = run_federation(
            spec.fed_for(key),
            train,
            test,
            model_kind=key.kind,
            hidden=spec.model.hidden,
            dropout=spec.model.dropout,
            gan_cfg=spec.gan,
            aug=spec.augment,
            assignment=assignment,
            average=spec.average,
            on_round=on_round,
        )
    except (FedATError, FloatingPointError, ValueError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        (run_dir / "status").write_text(f"failed\n{msg}\n")
        log.error("run %s failed: %s", key.name, msg)
        log.debug("%s", traceback.format_exc())
        return RunOutcome(key, False, None, msg)

    with (run_dir / "augmentation.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("client", "round", "class", "real_count", "synth_count"))
        for client, t, cls_, real, synth in result.augmentation:
            w.writerow((client, t + 1, cls_, real, synth))
    (run_dir / "weights.txt").write_text(dumps_weights(result.weights, result.activations))
    (run_dir / "status").write_text("ok\n")
    last = result.reports[-1]
    return RunOutcome(key, True, {m: getattr(last, m) for m in METRICS})


def _run_job(args) -> RunOutcome:
    spec, key, run_dir = args
    return run_one(spec, key, run_dir)


def _mean_sd(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), sd


def write_summary(spec: ExperimentSpec, outcomes: list[RunOutcome], path) -> list[dict]:
    """One row per combination: mean and sample sd over seeds of the final-round metrics."""
    by_combo: dict[str, list[RunOutcome]] = {}
    for o in outcomes:
        by_combo.setdefault(o.key.combo, []).append(o)
    rows = []
    for combo, group in by_combo.items():
        k = group[0].key
        ok = [o for o in group if o.ok]
        failed = [o for o in group if not o.ok]
        status = "ok" if not failed else ("failed" if not ok else "partial")
        row = {
            "mode": k.mode.value,
            "model": k.kind.value,
            "aggregator": k.aggregator.value,
            "E": k.local_epochs,
            "seeds": len(group),
            "completed": len(ok),
            "status": status,
        }
        for m in METRICS:
            mean, sd = _mean_sd([o.final[m] for o in ok])
            row[f"{m}_mean"], row[f"{m}_sd"] = mean, sd
        row["errors"] = "; ".join(f"s{o.key.seed}: {o.error}" for o in failed)
        rows.append(row)
    fields = ["mode", "model", "aggregator", "E", "seeds", "completed", "status"]
    fields += [f"{m}_{s}" for m in METRICS for s in ("mean", "sd")] + ["errors"]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows


def run_matrix(spec: ExperimentSpec, out=None, workers: int = 1) -> list[RunOutcome]:
    """Run every cell; failures are recorded, never fatal to the remaining cells."""
    out = Path(out or spec.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = spec.with_out(out)
    write_effective(spec, out / "effective-config")
    jobs = [(spec, key, out / key.name) for key in spec.runs()]
    if workers <= 1 or len(jobs) == 1:
        outcomes = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_job, jobs))  # map keeps matrix order
    write_summary(spec, outcomes, out / "summary.csv")
    return outcomes


# ---------------------------------------------------------------- plot data


def read_rounds(path) -> list[dict[str, float]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no round log at {path}")
    with path.open(newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _write_series(path, rows: list[dict[str, float]]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("series", "round", "value"))
        for metric, series in PLOT_SERIES.items():
            for r in rows:
                w.writerow((series, int(r["round"]), _fmt(r[metric])))


def emit_plots_data(run_dir) -> list[Path]:
    """Long-format ``series,round,value`` files.

    Given a single run directory, writes ``plot.csv`` beside its
    ``rounds.csv``. Given a matrix directory, does that for every run and
    adds ``plot-<combination>.csv`` with ``series,round,mean,sd`` over seeds.
    """
    run_dir = Path(run_dir)
    if (run_dir / "rounds.csv").exists():
        _write_series(run_dir / "plot.csv", read_rounds(run_dir / "rounds.csv"))
        return [run_dir / "plot.csv"]
    runs = sorted(p for p in run_dir.iterdir() if (p / "rounds.csv").exists()) if run_dir.is_dir() else []
    if not runs:
        raise FileNotFoundError(f"no round logs under {run_dir}")
    written = []
    groups: dict[str, list[list[dict[str, float]]]] = {}
    for r in runs:
        rows = read_rounds(r / "rounds.csv")
        _write_series(r / "plot.csv", rows)
        written.append(r / "plot.csv")
        combo = r.name.rsplit("-s", 1)[0]
        groups.setdefault(combo, []).append(rows)
    for combo, logs in sorted(groups.items()):
        n_rounds = min(len(rows) for rows in logs)
        path = run_dir / f"plot-{combo}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("series", "round", "mean", "sd"))
            for metric, series in PLOT_SERIES.items():
                for i in range(n_rounds):
                    mean, sd = _mean_sd([rows[i][metric] for rows in logs])
                    w.writerow((series, i + 1, _fmt(mean), _fmt(sd)))
        written.append(path)
    return written


def late_round_sd(rounds: list[dict[str, float]], last: int = 20, metric: str = "f1") -> float:
    """Standard deviation of ``metric`` over the final ``last`` rounds (stability check)."""
    values = [r[metric] for r in rounds[-last:]]
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
