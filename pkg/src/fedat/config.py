"""Experiment configuration: YAML in, validated dataclasses out.

Sections: ``dataset``, ``synth``, ``fed``, ``model``, ``gan``, ``augment``,
``eval``. Unknown keys are rejected with their dotted path. ``fed.mode``,
``fed.aggregator``, ``fed.E`` and ``model.kind`` may be lists; the run
matrix is their product times ``eval.seeds``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from fedat.augmentation import BalanceMode
from fedat.data import SynthSpec
from fedat.errors import ConfigError, FedATError
from fedat.federation import Aggregator, AugmentConfig, FedConfig, GanConfig, Mode
from fedat.models import ModelKind


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "synth"  # "synth" or "csv"
    path: str | None = None
    test_fraction: float = 0.2
    assignment: tuple[tuple[int, ...], ...] | None = None  # client -> scenario classes


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind = ModelKind.SNN_MLP
    hidden: tuple[int, ...] = (64, 32)
    dropout: float = 0.2


@dataclass(frozen=True)
class RunKey:
    """One cell of the run matrix."""

    mode: Mode
    kind: ModelKind
    aggregator: Aggregator
    local_epochs: int
    seed: int

    @property
    def combo(self) -> str:
        return f"{self.mode.value}-{self.kind.value}-{self.aggregator.value}-E{self.local_epochs}"

    @property
    def name(self) -> str:
        return f"{self.combo}-s{self.seed}"


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: DatasetConfig
    synth: SynthSpec
    fed: FedConfig  # mode/aggregator/E/seed here are the first matrix entries
    model: ModelConfig
    gan: GanConfig
    augment: AugmentConfig
    modes: tuple[Mode, ...]
    kinds: tuple[ModelKind, ...]
    aggregators: tuple[Aggregator, ...]
    local_epochs: tuple[int, ...]
    seeds: tuple[int, ...]
    average: str = "macro"
    out: str = "runs"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def runs(self) -> list[RunKey]:
        return [
            RunKey(m, k, a, e, s)
            for m, k, a, e, s in itertools.product(self.modes, self.kinds, self.aggregators, self.local_epochs, self.seeds)
        ]

    def fed_for(self, key: RunKey) -> FedConfig:
        return replace(self.fed, mode=key.mode, aggregator=key.aggregator, local_epochs=key.local_epochs, seed=key.seed)

    def with_seeds(self, seeds) -> "ExperimentSpec":
        seeds = tuple(int(s) for s in seeds)
        raw = _deep_copy(self.raw)
        raw["eval"]["seeds"] = list(seeds)
        return replace(self, seeds=seeds, fed=replace(self.fed, seed=seeds[0]), raw=raw)

    def with_out(self, out) -> "ExperimentSpec":
        raw = _deep_copy(self.raw)
        raw["eval"]["out"] = str(out)
        return replace(self, out=str(out), raw=raw)

    def single_run(self, key: RunKey) -> "ExperimentSpec":
        """This experiment restricted to one matrix cell (written next to each run)."""
        raw = _deep_copy(self.raw)
        raw["fed"].update(mode=key.mode.value, aggregator=key.aggregator.value, E=key.local_epochs)
        raw["model"]["kind"] = key.kind.value
        raw["eval"]["seeds"] = [key.seed]
        return from_dict(raw)


# ------------------------------------------------------------------ schema

# section -> key -> default; the first matrix value is used where a scalar is expected
DEFAULTS: dict[str, dict[str, Any]] = {
    "dataset": {"source": "synth", "path": None, "test_fraction": 0.2, "assignment": None},
    "synth": {"classes": 4, "counts": [5000, 60, 50, 40], "dim": 20, "separation": 2.0, "scales": None, "seed": 0},
    "fed": {
        "K": 3,
        "T": 60,
        "B": 128,
        "E": 1,
        "eta": 0.001,
        "mu": 0.01,
        "aggregator": "fedavg",
        "mode": "fedat",
    },
    "model": {"kind": "snn_mlp", "hidden": [64, 32], "dropout": 0.2},
    "gan": {
        "hidden": [32, 64, 128],
        "sigma": 1.0,
        "epochs": 200,
        "batch_size": 128,
        "eta": 0.001,
        "ema_decay": 0.998,
        "balanced": True,
        "fake_class_weight": 0.0,
    },
    "augment": {"target": "local_max", "global_count": 0},
    "eval": {"average": "macro", "seeds": [0], "out": "runs"},
}


def _deep_copy(d: dict) -> dict:
    return {k: dict(v) if isinstance(v, dict) else v for k, v in d.items()}


def _merge(doc: dict) -> dict:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("top level of the config must be a mapping")
    merged = {}
    for section, values in doc.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section {section!r}")
        if values is None:
            values = {}
        if not isinstance(values, dict):
            raise ConfigError(f"{section}: expected a mapping, got {type(values).__name__}")
        for key in values:
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    for section, defaults in DEFAULTS.items():
        merged[section] = {**defaults, **(doc.get(section) or {})}
    return merged


def _as_list(path: str, value, cast):
    values = value if isinstance(value, list) else [value]
    if not values:
        raise ConfigError(f"{path}: empty list")
    try:
        return tuple(cast(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _int(path: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _num(path: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _bool(path: str, value) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true/false, got {value!r}")
    return value


def _ints(path: str, value) -> tuple[int, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of integers")
    return tuple(_int(f"{path}[{i}]", v) for i, v in enumerate(value))


def from_dict(doc: dict) -> ExperimentSpec:
    """Validate a config mapping; every error message names the offending key path."""
    raw = _merge(doc)
    d, s, f, m, g, a, e = (raw[k] for k in ("dataset", "synth", "fed", "model", "gan", "augment", "eval"))

    def guard(path, build):
        try:
            return build()
        except ConfigError:
            raise
        except (FedATError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    # scalar checks first so the message points at the key, not the dataclass
    for key in ("K", "T", "B"):
        _int(f"fed.{key}", f[key])
    for key, ok in (("K", f["K"] >= 1), ("T", f["T"] >= 1), ("B", f["B"] >= 1)):
        if not ok:
            raise ConfigError(f"fed.{key}: must be >= 1, got {f[key]}")
    if _num("fed.eta", f["eta"]) <= 0:
        raise ConfigError(f"fed.eta: must be > 0, got {f['eta']}")
    if _num("fed.mu", f["mu"]) < 0:
        raise ConfigError(f"fed.mu: must be >= 0, got {f['mu']}")

    modes = _as_list("fed.mode", f["mode"], Mode)
    aggregators = _as_list("fed.aggregator", f["aggregator"], Aggregator)
    epochs = _as_list("fed.E", f["E"], lambda v: _int("fed.E", v))
    if min(epochs) < 1:
        raise ConfigError(f"fed.E: must be >= 1, got {f['E']}")
    kinds = _as_list("model.kind", m["kind"], ModelKind)
    seeds = _ints("eval.seeds", e["seeds"] if isinstance(e["seeds"], list) else [e["seeds"]])
    if not seeds:
        raise ConfigError("eval.seeds: at least one seed is required")
    if e["average"] not in ("macro", "weighted"):
        raise ConfigError(f"eval.average: expected 'macro' or 'weighted', got {e['average']!r}")

    if d["source"] not in ("synth", "csv"):
        raise ConfigError(f"dataset.source: expected 'synth' or 'csv', got {d['source']!r}")
    if d["source"] == "csv" and not d["path"]:
        raise ConfigError("dataset.path: required when dataset.source is 'csv'")
    tf = _num("dataset.test_fraction", d["test_fraction"])
    if not 0 < tf < 1:
        raise ConfigError(f"dataset.test_fraction: must lie in (0, 1), got {tf}")
    assignment = None
    if d["assignment"] is not None:
        if not isinstance(d["assignment"], list):
            raise ConfigError("dataset.assignment: expected a list of class lists, one per client")
        assignment = tuple(_ints(f"dataset.assignment[{i}]", row) for i, row in enumerate(d["assignment"]))
        if len(assignment) != f["K"]:
            raise ConfigError(f"dataset.assignment: {len(assignment)} rows for K={f['K']} clients")
    dataset = DatasetConfig(d["source"], d["path"], tf, assignment)

    counts = _ints("synth.counts", s["counts"])
    if _int("synth.classes", s["classes"]) != len(counts):
        raise ConfigError(f"synth.counts: {len(counts)} entries for synth.classes={s['classes']}")
    scales = None if s["scales"] is None else tuple(_num(f"synth.scales[{i}]", v) for i, v in enumerate(s["scales"]))
    synth = guard(
        "synth",
        lambda: SynthSpec(counts, _int("synth.dim", s["dim"]), _num("synth.separation", s["separation"]), scales, _int("synth.seed", s["seed"])),
    )

    fed = guard(
        "fed",
        lambda: FedConfig(
            n_clients=f["K"],
            rounds=f["T"],
            batch_size=f["B"],
            local_epochs=epochs[0],
            eta=float(f["eta"]),
            mu=float(f["mu"]),
            aggregator=aggregators[0],
            mode=modes[0],
            seed=seeds[0],
        ),
    )
    dropout = _num("model.dropout", m["dropout"])
    if not 0 <= dropout < 1:
        raise ConfigError(f"model.dropout: must lie in [0, 1), got {dropout}")
    hidden = _ints("model.hidden", m["hidden"])
    if not hidden or min(hidden) < 1:
        raise ConfigError("model.hidden: needs at least one positive width")
    model = ModelConfig(kinds[0], hidden, dropout)

    gan = guard(
        "gan",
        lambda: GanConfig(
            hidden=_ints("gan.hidden", g["hidden"]),
            sigma=_num("gan.sigma", g["sigma"]),
            epochs=_int("gan.epochs", g["epochs"]),
            batch_size=_int("gan.batch_size", g["batch_size"]),
            eta=_num("gan.eta", g["eta"]),
            ema_decay=_num("gan.ema_decay", g["ema_decay"]),
            balanced=_bool("gan.balanced", g["balanced"]),
            fake_class_weight=_num("gan.fake_class_weight", g["fake_class_weight"]),
        ),
    )
    try:
        target = BalanceMode(a["target"])
    except ValueError:
        raise ConfigError(f"augment.target: expected one of {[b.value for b in BalanceMode]}, got {a['target']!r}") from None
    if _int("augment.global_count", a["global_count"]) < 0:
        raise ConfigError("augment.global_count: must be >= 0")
    augment = AugmentConfig(target, a["global_count"])

    # record resolved values so the effective config is self-describing
    raw["eval"]["seeds"] = list(seeds)
    return ExperimentSpec(
        dataset=dataset,
        synth=synth,
        fed=fed,
        model=model,
        gan=gan,
        augment=augment,
        modes=modes,
        kinds=kinds,
        aggregators=aggregators,
        local_epochs=epochs,
        seeds=seeds,
        average=e["average"],
        out=str(e["out"]),
        raw=raw,
    )


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if isinstance(doc, dict) and isinstance(doc.get("dataset"), dict) and doc["dataset"].get("path"):
        csv = Path(doc["dataset"]["path"])
        if not csv.is_absolute():
            doc["dataset"]["path"] = str((path.parent / csv).resolve())
    return from_dict(doc)


def dump_effective(spec: ExperimentSpec) -> str:
    """Fully resolved config as YAML; parsing it back yields an equal spec."""
    return yaml.safe_dump(spec.raw, sort_keys=True, default_flow_style=None)


def write_effective(spec: ExperimentSpec, path) -> None:
    Path(path).write_text(dump_effective(spec), encoding="utf-8")
