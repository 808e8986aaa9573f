"""Local adversarial training: a per-client ACGAN whose discriminator is the
client's own classifier, followed by minority-class synthesis and merge."""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field

import numpy as np

from fedat.data import ClientDataset
from fedat.errors import DimensionError, DivergenceError, InvalidLabelError, TrainingError
from fedat.models import (
    GeneratorSpec,
    SourceHead,
    build_generator,
    classifier_as_discriminator,
    discriminator_backward,
    generator_input,
)
from fedat.nn import PROB_CLAMP, ModelWeights, Network, OptimizerState, adam, binary_cross_entropy, cross_entropy_loss, optimizer_step


class BalanceMode(str, enum.Enum):
    LOCAL_MAX = "local_max"
    GLOBAL_UNION = "global_union"


@dataclass
class GanTrainState:
    generator: Network
    classifier: Network
    head: SourceHead
    spec: GeneratorSpec
    g_opt: OptimizerState
    d_opt: OptimizerState
    ema_decay: float = 0.998
    ema: np.ndarray | None = None  # flat running average of generator weights
    epoch: int = 0
    g_losses: list[float] = field(default_factory=list)
    d_losses: list[float] = field(default_factory=list)

    def update_ema(self) -> None:
        current = self.generator.view_weights().flat()
        if self.ema is None:
            self.ema = current
        else:
            self.ema *= self.ema_decay
            self.ema += (1.0 - self.ema_decay) * current

    def frozen_generator(self) -> Network:
        """Copy of the generator carrying the running-average weights (if any)."""
        frozen = copy.deepcopy(self.generator)
        if self.ema is not None:
            frozen.set_weights(frozen.view_weights().unflatten(self.ema))
        return frozen

    @property
    def noise_sigma(self) -> float:
        return self.spec.noise_sigma

    @classmethod
    def create(cls, spec: GeneratorSpec, classifier: Network, rng: np.random.Generator, eta: float = 0.001):
        if classifier.input_dim != spec.out_dim or classifier.output_dim != spec.num_classes:
            raise DimensionError("generator spec does not match the classifier dimensions")
        return cls(
            generator=build_generator(spec, rng),
            classifier=classifier,
            head=SourceHead.init(classifier.layers[-1].fan_in, rng),
            spec=spec,
            g_opt=adam(eta),
            d_opt=adam(eta),
        )


@dataclass
class AugmentationPlan:
    """Per-class target counts; synthesis emits ``target - current`` rows per class."""

    targets: dict[int, int]
    current: dict[int, int]
    num_classes: int

    def __post_init__(self):
        for c, t in self.targets.items():
            if c == 0:
                raise InvalidLabelError("the normal class (0) is never augmented")
            if t < self.current.get(c, 0):
                raise InvalidLabelError(f"target {t} for class {c} is below its current count")

    def to_generate(self) -> dict[int, int]:
        return {c: t - self.current.get(c, 0) for c, t in sorted(self.targets.items())}

    @property
    def total(self) -> int:
        return sum(self.to_generate().values())


def plan_balancing(
    client: ClientDataset,
    mode: BalanceMode | str = BalanceMode.LOCAL_MAX,
    aux_labels: set[int] = frozenset(),
    global_count: int = 0,
) -> AugmentationPlan:
    """Raise every local insider class to the largest local insider count.

    In ``global_union`` mode, insider classes known from ``aux_labels`` but
    absent locally are also targeted, at ``global_count`` rows each.
    """
    mode = BalanceMode(mode)
    counts = client.class_counts()
    insiders = sorted(c for c in client.local_classes if c != 0)
    current = {c: int(counts[c]) for c in insiders}
    top = max(current.values(), default=0)
    targets = {c: top for c in insiders}
    if mode is BalanceMode.GLOBAL_UNION and global_count > 0:
        for c in sorted(aux_labels):
            if c != 0 and c not in targets:
                targets[c] = int(global_count)
                current[c] = 0
    return AugmentationPlan(targets, current, client.num_classes)


def _noise(state: GanTrainState, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, state.noise_sigma, size=(n, state.spec.latent_dim))


def sample_generator(state: GanTrainState, labels, rng: np.random.Generator) -> np.ndarray:
    """Feed ``z ~ N(0, sigma^2 I)`` and the one-hot labels through the generator."""
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= state.spec.num_classes):
        raise InvalidLabelError(f"labels must lie in [0, {state.spec.num_classes})")
    gin = generator_input(_noise(state, len(labels), rng), labels, state.spec.num_classes)
    return state.frozen_generator().forward(gin)[0]


def _joint(classifier_w: ModelWeights, head_w: ModelWeights) -> ModelWeights:
    return ModelWeights(classifier_w.layers + head_w.layers)


def _balanced_rows(by_class: dict, picks: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # one real row per pick, drawn with replacement inside its class
    rows = np.empty(len(picks), dtype=np.intp)
    for k, members in by_class.items():
        hit = picks == k
        rows[hit] = members[rng.integers(0, len(members), size=int(hit.sum()))]
    return rows


def _weighted_ce(probs: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> float:
    n = len(labels)
    p = np.clip(probs[np.arange(n), labels], PROB_CLAMP, 1.0)
    return float(-(weights * np.log(p)).sum() / n)


def train_acgan(
    client: ClientDataset,
    state: GanTrainState,
    epochs: int,
    batch: int,
    rng: np.random.Generator,
    cond_labels=None,
    balanced: bool = True,
    fake_class_weight: float = 0.0,
) -> GanTrainState:
    """Alternate discriminator/classifier and generator updates for ``epochs`` passes.

    Discriminator loss: BCE on the source head (real=1, fake=0) plus
    cross-entropy on the class head for real rows, and for generated rows
    scaled by ``fake_class_weight`` (0 by default: on a client holding a few
    dozen minority rows, labelled fakes teach the classifier that the
    minority class looks fake). With ``balanced`` the real minibatches are
    drawn class-uniformly with replacement, so minority rows are not drowned
    out by the normal class. Generator
    loss: BCE pushing fakes towards "real" plus cross-entropy of the
    conditioning label. Both sides use their Adam states in ``state``.
    An exponential moving average of the generator weights is kept per step;
    sampling uses the average, which damps the usual GAN oscillation.
    """
    if epochs == 0:
        return state
    if client.n_samples < 2:
        raise TrainingError(f"client {client.client_id}: GAN training needs at least two samples")
    cond = np.array(sorted(client.local_classes if cond_labels is None else cond_labels), dtype=np.intp)
    gen, clf, head, c = state.generator, state.classifier, state.head, state.spec.num_classes
    x_all, y_all = client.features, client.labels
    n_all = client.n_samples
    local = np.array(sorted(client.local_classes), dtype=np.intp)
    by_class = {k: np.flatnonzero(y_all == k) for k in local}

    for _ in range(epochs):
        order = rng.permutation(n_all)
        g_sum = d_sum = 0.0
        n_batches = 0
        for start in range(0, n_all, batch):
            idx = order[start : start + batch]
            n = len(idx)
            if balanced:
                picks = rng.choice(local, size=n)
                idx = _balanced_rows(by_class, picks, rng)

            # discriminator / classifier step on real + fake rows
            y_fake = rng.choice(cond, size=n)
            x_fake = gen.forward(generator_input(_noise(state, n, rng), y_fake, c))[0]
            x = np.vstack([x_all[idx], x_fake])
            y = np.concatenate([y_all[idx], y_fake])
            src = np.concatenate([np.ones(n), np.zeros(n)])
            cw = np.concatenate([np.ones(n), np.full(n, fake_class_weight)])
            out = classifier_as_discriminator(clf, x, head, training=True, rng=rng)
            d_loss = binary_cross_entropy(out.source_prob, src) + _weighted_ce(out.class_probs, y, cw)
            cg, hg, _ = discriminator_backward(clf, head, out, y, src, class_weight=cw)
            new = optimizer_step(state.d_opt, _joint(clf.view_weights(), head.as_weights()), _joint(cg, hg))
            clf.set_weights(ModelWeights(new.layers[:-1]), copy=False)
            head.weights, head.bias = new.layers[-1]

            # generator step: fool the source head, hit the conditioning class
            y_gen = rng.choice(cond, size=n)
            x_gen, gcache = gen.forward(generator_input(_noise(state, n, rng), y_gen, c))
            out = classifier_as_discriminator(clf, x_gen, head, training=True, rng=rng)
            ones = np.ones(n)
            g_loss = binary_cross_entropy(out.source_prob, ones) + cross_entropy_loss(out.class_probs, y_gen)
            _, _, dx = discriminator_backward(clf, head, out, y_gen, ones)
            gg, _ = gen.backward_from(gcache, grad_output=dx)
            gen.set_weights(optimizer_step(state.g_opt, gen.view_weights(), gg), copy=False)
            state.update_ema()

            g_sum += g_loss
            d_sum += d_loss
            n_batches += 1
        state.epoch += 1
        g_mean, d_mean = g_sum / n_batches, d_sum / n_batches
        if not (np.isfinite(g_mean) and np.isfinite(d_mean)):
            raise DivergenceError(f"client {client.client_id}: GAN loss diverged at epoch {state.epoch}")
        state.g_losses.append(g_mean)
        state.d_losses.append(d_mean)
    return state


def generate_adversarial(
    state: GanTrainState, plan: AugmentationPlan, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Synthesize ``target - current`` rows for every planned class with the frozen generator."""
    for cls_ in plan.targets:
        if not 0 <= cls_ < state.spec.num_classes:
            raise InvalidLabelError(f"plan references class {cls_}, outside [0, {state.spec.num_classes})")
    labels = np.concatenate(
        [np.full(n, cls_, dtype=np.intp) for cls_, n in plan.to_generate().items()] or [np.zeros(0, np.intp)]
    )
    if labels.size == 0:
        return np.zeros((0, state.spec.out_dim)), labels
    return sample_generator(state, labels, rng), labels


def merge_and_shuffle(
    real: ClientDataset, synth: tuple[np.ndarray, np.ndarray], rng: np.random.Generator
) -> ClientDataset:
    x_syn, y_syn = synth
    x_syn = np.asarray(x_syn, dtype=np.float64).reshape(-1, real.features.shape[1]) if len(x_syn) == 0 else x_syn
    if x_syn.shape[1] != real.features.shape[1]:
        raise DimensionError(f"synthetic rows have {x_syn.shape[1]} features, client has {real.features.shape[1]}")
    x = np.vstack([real.features, x_syn])
    y = np.concatenate([real.labels, np.asarray(y_syn, dtype=np.intp)])
    flags = np.concatenate([real.synthetic, np.ones(len(y_syn), dtype=bool)])
    order = rng.permutation(len(y))
    return ClientDataset(real.client_id, x[order], y[order], real.num_classes, flags[order])
