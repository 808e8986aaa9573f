"""Datasets, min-max standardization, synthetic CERT-like data and non-IID partitioning.

Class index 0 is always the non-malicious ("normal") class; indices 1..c-1
are insider scenarios.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from fedat.errors import (
    ConfigError,
    ContractViolationError,
    DataFormatError,
    DimensionError,
    EmptyDatasetError,
    InvalidHyperparameterError,
    InvalidLabelError,
)

NORMAL_TOKENS = ("normal", "0")


@dataclass
class MinMaxScaler:
    """Per-column affine map of the training range onto [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> MinMaxScaler:
        return cls(x.min(axis=0), x.max(axis=0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = 2.0 * (x - self.lo) / safe - 1.0
        out[:, span <= 0] = 0.0  # constant columns
        return np.clip(out, -1.0, 1.0)

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        return self.lo + (np.asarray(x) + 1.0) * 0.5 * (self.hi - self.lo)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: list[str]
    scaler: MinMaxScaler | None = None
    standardized: bool = False

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.features.ndim != 2 or len(self.labels) != len(self.features):
            raise DimensionError(
                f"features {self.features.shape} and labels {self.labels.shape} do not match"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise InvalidLabelError(f"labels must lie in [0, {len(self.class_names)})")
        if not np.isfinite(self.features).all():
            raise DataFormatError("features contain NaN or Inf")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, idx) -> Dataset:
        return replace(self, features=self.features[idx], labels=self.labels[idx])


@dataclass
class ClientDataset:
    client_id: int
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    synthetic: np.ndarray = field(default=None, repr=False)  # diagnostics only

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if len(self.features) != len(self.labels):
            raise DimensionError("client features and labels differ in length")
        if self.synthetic is None:
            self.synthetic = np.zeros(len(self.labels), dtype=bool)

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    @property
    def local_classes(self) -> set[int]:
        return {int(c) for c in np.unique(self.labels)}

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


# ------------------------------------------------------------------------ io


def load_csv(path) -> Dataset:
    """Read ``f0,...,f{d-1},label``. Label tokens become indices in order of
    first appearance, except that ``normal``/``0`` is always index 0."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1].strip() != "label":
            raise DataFormatError(f"{path}: header must be f0,...,f<d-1>,label")
        d = len(header) - 1
        rows, tokens = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise DataFormatError(f"{path}: row {lineno} has {len(row)} fields, expected {d + 1}")
            vals = []
            for col, cell in enumerate(row[:-1]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: non-numeric value {cell!r} at row {lineno}, column {header[col]}"
                    ) from None
            rows.append(vals)
            tokens.append(row[-1].strip())
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    names = [t for t in dict.fromkeys(tokens)]
    normal = next((t for t in names if t.lower() in NORMAL_TOKENS), None)
    if normal is not None:
        names.remove(normal)
        names.insert(0, normal)
    index = {t: i for i, t in enumerate(names)}
    return Dataset(np.array(rows), np.array([index[t] for t in tokens]), names)


def write_csv(ds: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(ds.n_features)] + ["label"])
        for row, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [ds.class_names[y]])


# ------------------------------------------------------------ preprocessing


def standardize(train: Dataset, others: list[Dataset] = ()) -> tuple[Dataset, list[Dataset]]:
    """Fit min-max on ``train`` only and apply it to every dataset.

    Test values outside the training range are clipped to [-1, 1].
    """
    if train.n_samples == 0:
        raise EmptyDatasetError("cannot standardize an empty training set")
    for ds in (train, *others):
        if ds.standardized:
            raise ContractViolationError("dataset is already standardized")
    scaler = MinMaxScaler.fit(train.features)

    def apply(ds):
        return replace(ds, features=scaler.transform(ds.features), scaler=scaler, standardized=True)

    return apply(train), [apply(ds) for ds in others]


def train_test_split(ds: Dataset, test_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Stratified hold-out; per-class test count is round-half-up of n * fraction.

    Classes with at least two samples land in both splits; singleton classes
    stay in train with a warning.
    """
    if not 0.0 < test_fraction < 1.0:
        raise InvalidHyperparameterError(f"test_fraction must be in (0, 1), got {test_fraction}")
    test_idx = []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        n = len(idx)
        if n == 0:
            continue
        if n == 1:
            warnings.warn(f"class {ds.class_names[c]!r} has a single sample; kept in train", stacklevel=2)
            continue
        n_test = min(max(int(np.floor(n * test_fraction + 0.5)), 1), n - 1)
        test_idx.append(rng.choice(idx, size=n_test, replace=False))
    test_mask = np.zeros(ds.n_samples, dtype=bool)
    if test_idx:
        test_mask[np.concatenate(test_idx)] = True
    return ds.subset(~test_mask), ds.subset(test_mask)


# ---------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SynthSpec:
    """Gaussian-blob stand-in for CERT feature vectors.

    ``separation`` is the per-feature mean offset (in units of the class
    standard deviation) of each insider class from the normal class. Every
    insider class shifts its own block of features, so the blocks partition
    the feature columns.
    """

    samples_per_class: tuple[int, ...] = (5000, 60, 50, 40)
    feature_dim: int = 20
    separation: float = 1.0
    class_scales: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "samples_per_class", tuple(int(n) for n in self.samples_per_class))
        if len(self.samples_per_class) < 2:
            raise InvalidHyperparameterError("need at least two classes")
        if min(self.samples_per_class) < 1:
            raise InvalidHyperparameterError("every class needs at least one sample")
        if self.samples_per_class[0] <= max(self.samples_per_class[1:]):
            raise InvalidHyperparameterError("the normal class (index 0) must be the majority")
        if self.feature_dim < 2:
            raise InvalidHyperparameterError("feature_dim must be >= 2")
        if self.class_scales is not None and len(self.class_scales) != self.num_classes:
            raise InvalidHyperparameterError("class_scales needs one entry per class")

    @property
    def num_classes(self) -> int:
        return len(self.samples_per_class)

    def class_means(self) -> np.ndarray:
        c, d = self.num_classes, self.feature_dim
        means = np.zeros((c, d))
        for k in range(1, c):
            cols = np.arange(d)[(np.arange(d) % (c - 1)) == (k - 1) % d]
            means[k, cols] = self.separation
        return means


def synthesize_cert_like(spec: SynthSpec, rng: np.random.Generator | None = None) -> Dataset:
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    means = spec.class_means()
    scales = spec.class_scales or (1.0,) * spec.num_classes
    xs, ys = [], []
    for k, n in enumerate(spec.samples_per_class):
        xs.append(means[k] + scales[k] * rng.standard_normal((n, spec.feature_dim)))
        ys.append(np.full(n, k))
    order = rng.permutation(sum(spec.samples_per_class))
    names = ["normal"] + [f"scenario{k}" for k in range(1, spec.num_classes)]
    return Dataset(np.vstack(xs)[order], np.concatenate(ys)[order], names)


# -------------------------------------------------------------- partitioning


def partition_non_iid(
    ds: Dataset,
    n_clients: int,
    rng: np.random.Generator,
    assignment: list[list[int]] | None = None,
) -> list[ClientDataset]:
    """Give every insider scenario to exactly one client; share normal samples.

    Scenarios go round-robin (client k holds scenarios k+1, k+1+K, ...)
    unless ``assignment`` lists each client's scenario indices. Normal
    samples are shuffled and split into K near-equal shares.
    """
    if n_clients < 1:
        raise ConfigError(f"fed.K: need at least one client, got {n_clients}")
    scenarios = list(range(1, ds.num_classes))
    if assignment is None:
        if n_clients > 1 and len(scenarios) < n_clients:
            raise ConfigError(
                f"dataset.assignment: {n_clients} clients but only {len(scenarios)} scenarios; "
                "provide an explicit assignment"
            )
        assignment = [scenarios[k::n_clients] for k in range(n_clients)]
    else:
        if len(assignment) != n_clients:
            raise ConfigError(f"dataset.assignment: expected {n_clients} entries, got {len(assignment)}")
        flat = sorted(int(s) for group in assignment for s in group)
        if flat != scenarios:
            raise ConfigError(f"dataset.assignment must cover scenarios {scenarios} exactly once, got {flat}")

    normal = np.flatnonzero(ds.labels == 0)
    shares = np.array_split(rng.permutation(normal), n_clients)
    clients = []
    for k in range(n_clients):
        owned = np.isin(ds.labels, np.asarray(assignment[k], dtype=np.intp))
        idx = np.sort(np.concatenate([shares[k], np.flatnonzero(owned)]))
        clients.append(ClientDataset(k, ds.features[idx], ds.labels[idx], ds.num_classes))
    return clients
