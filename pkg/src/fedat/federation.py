"""In-process federation: client updates, weighted aggregation and the round loop.

Three training modes share one loop:

* ``centralized``  - one pooled client, no aggregation (baseline).
* ``classical_fl`` - FedAvg/FedProx over non-IID clients.
* ``fedat``        - classical FL plus a local ACGAN phase before every
  client update; synthetic minority rows are merged into the local data.

Each client draws from private RNG streams keyed by ``(seed, client, round)``,
so results do not depend on scheduling order.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from fedat.augmentation import (
    BalanceMode,
    GanTrainState,
    generate_adversarial,
    merge_and_shuffle,
    plan_balancing,
    train_acgan,
)
from fedat.data import ClientDataset, Dataset, partition_non_iid
from fedat.errors import (
    AggregationError,
    DimensionError,
    DivergenceError,
    InvalidHyperparameterError,
    ProtocolError,
)
from fedat.metrics import confusion, macro_prf
from fedat.models import ClassifierSpec, GeneratorSpec, ModelKind, build_classifier
from fedat.nn import ModelWeights, Network, adam, cross_entropy_loss

log = logging.getLogger(__name__)


class Aggregator(str, enum.Enum):
    FEDAVG = "fedavg"
    FEDPROX = "fedprox"


class Mode(str, enum.Enum):
    CENTRALIZED = "centralized"
    CLASSICAL_FL = "classical_fl"
    FEDAT = "fedat"


# rng stream tags
_SPLIT, _PARTITION, _INIT, _GAN_INIT, _TRAIN, _GAN, _AUGMENT = range(7)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


@dataclass(frozen=True)
class FedConfig:
    n_clients: int = 3
    rounds: int = 60
    batch_size: int = 128
    local_epochs: int = 1
    eta: float = 0.001
    mu: float = 0.01
    aggregator: Aggregator = Aggregator.FEDAVG
    mode: Mode = Mode.FEDAT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "aggregator", Aggregator(self.aggregator))
        object.__setattr__(self, "mode", Mode(self.mode))
        checks = {
            "n_clients": self.n_clients >= 1,
            "rounds": self.rounds >= 1,
            "batch_size": self.batch_size >= 1,
            "local_epochs": self.local_epochs >= 1,
            "eta": self.eta > 0,
            "mu": self.mu >= 0,
        }
        for name, ok in checks.items():
            if not ok:
                raise InvalidHyperparameterError(f"{name} out of range: {getattr(self, name)!r}")

    @property
    def prox_mu(self) -> float:
        """Proximal coefficient actually applied (0 unless FedProx)."""
        return self.mu if self.aggregator is Aggregator.FEDPROX else 0.0


@dataclass(frozen=True)
class GanConfig:
    hidden: tuple[int, ...] = (32, 64, 128)
    sigma: float = 1.0
    epochs: int = 200
    batch_size: int = 128
    eta: float = 0.001
    ema_decay: float = 0.998
    balanced: bool = True  # class-balanced real minibatches in the GAN phase
    fake_class_weight: float = 0.0  # weight of the class loss on generated rows

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.eta <= 0 or self.sigma <= 0:
            raise InvalidHyperparameterError(f"invalid GAN settings: {self}")
        if not 0.0 <= self.ema_decay < 1.0 or self.fake_class_weight < 0:
            raise InvalidHyperparameterError(f"invalid GAN settings: {self}")


@dataclass(frozen=True)
class AugmentConfig:
    target: BalanceMode = BalanceMode.LOCAL_MAX
    global_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target", BalanceMode(self.target))


@dataclass
class RoundReport:
    round: int
    precision: float
    recall: float
    f1: float
    mean_train_loss: float
    duration_ms: float
    n_responders: int = 0


@dataclass
class ClientState:
    client_id: int
    data: ClientDataset
    model: Network
    gan: GanTrainState | None = None


@dataclass
class ServerState:
    weights: ModelWeights
    aux_labels: set[int]
    round: int
    test: Dataset


@dataclass
class ClientResult:
    client_id: int
    weights: ModelWeights
    local_classes: set[int]
    n_samples: int
    train_loss: float
    augmentation: list[tuple[int, int, int, int, int]] = field(default_factory=list)


@dataclass
class FederationResult:
    reports: list[RoundReport]
    weights: ModelWeights
    activations: list[str]
    augmentation: list[tuple[int, int, int, int, int]]  # client, round, class, real, synth
    aux_labels: set[int]


# ---------------------------------------------------------------- aggregation


def aggregation_weights(counts: list[int]) -> list[Fraction]:
    total = sum(counts)
    return [Fraction(n, total) for n in counts]


def fedavg_aggregate(updates: list[tuple[ModelWeights, int]]) -> ModelWeights:
    """Sample-count weighted mean of client weights.

    Evaluated as ``w_1 + sum_k (N_k/N) (w_k - w_1)`` in list order, which is
    algebraically the plain weighted mean but returns ``w`` bit-exactly when
    every update equals ``w``.
    """
    if not updates:
        raise ProtocolError("no client updates to aggregate")
    ref = updates[0][0]
    for i, (w, n) in enumerate(updates):
        if n < 1:
            raise AggregationError(f"update {i} reports {n} samples")
        if not w.combinable(ref):
            raise AggregationError(f"update {i} has shapes {w.shapes()}, expected {ref.shapes()}")
    fracs = aggregation_weights([n for _, n in updates])
    assert sum(fracs) == 1
    base = ref.flat()
    acc = np.zeros_like(base)
    for (w, _), frac in zip(updates, fracs):
        acc += float(frac) * (w.flat() - base)
    return ref.unflatten(base + acc)


def fedprox_local_loss(base: float, w_local: ModelWeights, w_global: ModelWeights, mu: float) -> float:
    """``base + mu/2 * ||w_local - w_global||^2``."""
    if mu < 0:
        raise InvalidHyperparameterError(f"mu must be >= 0, got {mu}")
    if not w_local.combinable(w_global):
        raise DimensionError("local and global weights differ in shape")
    return base + 0.5 * mu * w_local.squared_distance(w_global)


# ---------------------------------------------------------------- client side


def _sgd_epochs(model: Network, data: ClientDataset, w_global: ModelWeights, cfg: FedConfig, rng) -> float:
    """E epochs of mini-batch SGD (with the proximal gradient under FedProx); mean batch objective."""
    mu = cfg.prox_mu
    template = model.get_weights()
    g_flat = w_global.flat()
    losses = []
    for _ in range(cfg.local_epochs):
        order = rng.permutation(data.n_samples)
        for start in range(0, data.n_samples, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            probs, cache = model.forward(data.features[idx], training=True, rng=rng)
            loss = cross_entropy_loss(probs, data.labels[idx])
            grad = model.backward(cache, data.labels[idx]).flat()
            w = model.view_weights().flat()
            if cfg.aggregator is Aggregator.FEDPROX:
                diff = w - g_flat
                loss += 0.5 * mu * float(diff @ diff)
                grad += mu * diff
            w -= cfg.eta * grad
            model.set_weights(template.unflatten(w), copy=False)
            losses.append(loss)
    return float(np.mean(losses))


def _augment(state: ClientState, aux_labels: set[int], t: int, seed: int, gan_cfg: GanConfig, aug: AugmentConfig):
    """Local adversarial training; returns the (possibly merged) training set and diagnostics."""
    data = state.data
    gan = state.gan
    gan.d_opt = adam(gan_cfg.eta)  # the classifier was just overwritten by the global model
    cond = set(data.local_classes)
    if aug.target is BalanceMode.GLOBAL_UNION:
        cond |= aux_labels
    train_acgan(
        data,
        gan,
        gan_cfg.epochs,
        gan_cfg.batch_size,
        stream(seed, _GAN, data.client_id, t),
        cond,
        balanced=gan_cfg.balanced,
        fake_class_weight=gan_cfg.fake_class_weight,
    )
    plan = plan_balancing(data, aug.target, aux_labels, aug.global_count)
    x_adv, y_adv = generate_adversarial(gan, plan, stream(seed, _AUGMENT, data.client_id, t))
    real = data.class_counts()
    synth = np.bincount(y_adv, minlength=data.num_classes)
    diag = [
        (data.client_id, t, c, int(real[c]), int(synth[c]))
        for c in range(data.num_classes)
        if real[c] or synth[c]
    ]
    if len(y_adv) == 0:
        return data, diag
    merged = merge_and_shuffle(data, (x_adv, y_adv), stream(seed, _AUGMENT, data.client_id, t, 1))
    return merged, diag


def client_update(
    state: ClientState,
    w_global: ModelWeights,
    aux_labels: set[int],
    cfg: FedConfig,
    t: int,
    gan_cfg: GanConfig | None = None,
    aug: AugmentConfig | None = None,
) -> ClientResult:
    """Start from the global weights, optionally augment, then run E local epochs."""
    if state.model.get_weights().shapes() != w_global.shapes():
        raise DimensionError(f"client {state.client_id}: model shape differs from the global model")
    state.model.set_weights(w_global)
    data, diag = state.data, []
    if cfg.mode is Mode.FEDAT and state.gan is not None:
        data, diag = _augment(state, set(aux_labels), t, cfg.seed, gan_cfg or GanConfig(), aug or AugmentConfig())
    loss = _sgd_epochs(state.model, data, w_global, cfg, stream(cfg.seed, _TRAIN, state.client_id, t))
    weights = state.model.get_weights()
    if not weights.is_finite():
        raise DivergenceError(f"client {state.client_id}: non-finite weights in round {t}")
    return ClientResult(state.client_id, weights, state.data.local_classes, state.data.n_samples, loss, diag)


# ---------------------------------------------------------------- server side


def evaluate(model: Network, weights: ModelWeights, test: Dataset, average: str = "macro"):
    model.set_weights(weights)
    pred = model.predict(test.features).argmax(axis=1)
    return macro_prf(confusion(test.labels, pred, test.num_classes), average)


def server_round(
    server: ServerState,
    clients: list[ClientState],
    cfg: FedConfig,
    eval_model: Network,
    gan_cfg: GanConfig | None = None,
    aug: AugmentConfig | None = None,
    average: str = "macro",
) -> tuple[ServerState, RoundReport, list[ClientResult]]:
    """Broadcast, collect, aggregate, union the label sets, evaluate."""
    if server.round >= cfg.rounds:
        raise ProtocolError(f"round {server.round} exceeds the configured {cfg.rounds} rounds")
    started = time.perf_counter()
    t = server.round
    results = []
    for state in sorted(clients, key=lambda s: s.client_id):
        if state.data.n_samples == 0:
            log.warning("client %d has no data; skipped in round %d", state.client_id, t + 1)
            continue
        try:
            results.append(client_update(state, server.weights, server.aux_labels, cfg, t, gan_cfg, aug))
        except (DivergenceError, FloatingPointError) as exc:
            log.warning("client %d failed in round %d and is excluded: %s", state.client_id, t + 1, exc)
    if not results:
        raise ProtocolError(f"every client failed in round {t + 1}")
    weights = fedavg_aggregate([(r.weights, r.n_samples) for r in results])
    aux = set(server.aux_labels)
    for r in results:
        aux |= r.local_classes
    p, rec, f = evaluate(eval_model, weights, server.test, average)
    report = RoundReport(
        round=t + 1,
        precision=p,
        recall=rec,
        f1=f,
        mean_train_loss=float(np.mean([r.train_loss for r in results])),
        duration_ms=(time.perf_counter() - started) * 1000.0,
        n_responders=len(results),
    )
    return ServerState(weights, aux, t + 1, server.test), report, results


# ---------------------------------------------------------------- orchestration


def run_federation(
    cfg: FedConfig,
    train: Dataset,
    test: Dataset,
    model_kind: ModelKind | str = ModelKind.SNN_MLP,
    hidden: tuple[int, ...] = (64, 32),
    dropout: float = 0.2,
    gan_cfg: GanConfig | None = None,
    aug: AugmentConfig | None = None,
    assignment: list[list[int]] | None = None,
    average: str = "macro",
    on_round: Callable[[RoundReport], None] | None = None,
) -> FederationResult:
    """Partition ``train`` across clients and run ``cfg.rounds`` rounds.

    ``train`` and ``test`` must already share one standardization. In
    centralized mode all training data sits on a single client, so T rounds
    of E epochs amount to T*E pooled epochs.
    """
    gan_cfg = gan_cfg or GanConfig()
    aug = aug or AugmentConfig()
    c = train.num_classes
    spec = ClassifierSpec(kind=model_kind, input_dim=train.n_features, num_classes=c, hidden_dims=hidden, dropout_rate=dropout)
    global_model = build_classifier(spec, stream(cfg.seed, _INIT))

    if cfg.mode is Mode.CENTRALIZED:
        parts = [ClientDataset(0, train.features, train.labels, c)]
    else:
        parts = partition_non_iid(train, cfg.n_clients, stream(cfg.seed, _PARTITION), assignment)

    clients = []
    for part in parts:
        model = build_classifier(spec, stream(cfg.seed, _INIT))
        gan = None
        if cfg.mode is Mode.FEDAT:
            gspec = GeneratorSpec(
                latent_dim=train.n_features,
                out_dim=train.n_features,
                num_classes=c,
                hidden_dims=gan_cfg.hidden,
                noise_sigma=gan_cfg.sigma,
            )
            gan = GanTrainState.create(gspec, model, stream(cfg.seed, _GAN_INIT, part.client_id), gan_cfg.eta)
            gan.ema_decay = gan_cfg.ema_decay
        clients.append(ClientState(part.client_id, part, model, gan))

    server = ServerState(global_model.get_weights(), set(), 0, test)
    reports, diagnostics = [], []
    for _ in range(cfg.rounds):
        server, report, results = server_round(server, clients, cfg, global_model, gan_cfg, aug, average)
        reports.append(report)
        for r in results:
            diagnostics.extend(r.augmentation)
        if on_round is not None:
            on_round(report)
        log.info("round %d: P=%.4f R=%.4f F=%.4f loss=%.4f", report.round, report.precision, report.recall, report.f1, report.mean_train_loss)
    return FederationResult(reports, server.weights, global_model.activations, diagnostics, server.aux_labels)
