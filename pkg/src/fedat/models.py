"""Concrete architectures: classical MLP, SNN-MLP, ACGAN generator and the
classifier reused as a two-headed discriminator."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from fedat.errors import DimensionError, InvalidHyperparameterError
from fedat.nn import (
    Activation,
    DenseLayer,
    ForwardCache,
    ModelWeights,
    Network,
    glorot_uniform_init,
    lecun_uniform_init,
    one_hot,
    sigmoid,
)


class ModelKind(str, enum.Enum):
    MLP = "mlp"
    SNN_MLP = "snn_mlp"


@dataclass(frozen=True)
class ClassifierSpec:
    kind: ModelKind
    input_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = (64, 32)
    dropout_rate: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.num_classes < 2:
            raise InvalidHyperparameterError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise InvalidHyperparameterError(f"hidden_dims must be non-empty and positive, got {self.hidden_dims}")
        if self.input_dim < 1:
            raise InvalidHyperparameterError(f"input_dim must be >= 1, got {self.input_dim}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidHyperparameterError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass(frozen=True)
class GeneratorSpec:
    latent_dim: int
    out_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = (32, 64, 128)
    noise_sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.latent_dim != self.out_dim:
            raise InvalidHyperparameterError(
                f"latent_dim ({self.latent_dim}) must equal the feature count ({self.out_dim})"
            )
        if self.out_dim < 1 or self.num_classes < 2:
            raise InvalidHyperparameterError("generator needs out_dim >= 1 and num_classes >= 2")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise InvalidHyperparameterError(f"hidden sizes must be positive, got {self.hidden_dims}")
        if not self.noise_sigma > 0:
            raise InvalidHyperparameterError(f"noise_sigma must be positive, got {self.noise_sigma}")

    @property
    def input_dim(self) -> int:
        return self.latent_dim + self.num_classes


def _dense_stack(dims, hidden_act, out_act, init, dropout, dropout_kind, rng):
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        is_last = i == len(dims) - 2
        layers.append(
            DenseLayer(
                weights=init(fan_in, fan_out, rng),
                bias=np.zeros(fan_out),
                activation=out_act if is_last else hidden_act,
                dropout=0.0 if is_last else dropout,
                dropout_kind=dropout_kind,
            )
        )
    return Network(layers)


def build_mlp(spec: ClassifierSpec, rng: np.random.Generator) -> Network:
    """ReLU hidden layers with standard dropout, Glorot-uniform weights, softmax output."""
    if spec.kind is not ModelKind.MLP:
        raise InvalidHyperparameterError(f"build_mlp got a {spec.kind.value} spec")
    dims = [spec.input_dim, *spec.hidden_dims, spec.num_classes]
    return _dense_stack(
        dims, Activation.RELU, Activation.SOFTMAX, glorot_uniform_init, spec.dropout_rate, "standard", rng
    )


def build_snn_mlp(spec: ClassifierSpec, rng: np.random.Generator) -> Network:
    """SELU hidden layers, alpha dropout after each, LeCun-uniform weights, softmax output."""
    if spec.kind is not ModelKind.SNN_MLP:
        raise InvalidHyperparameterError(f"build_snn_mlp got a {spec.kind.value} spec")
    dims = [spec.input_dim, *spec.hidden_dims, spec.num_classes]

    def lui(fan_in, fan_out, rng):
        return lecun_uniform_init(fan_in, (fan_in, fan_out), rng)

    return _dense_stack(dims, Activation.SELU, Activation.SOFTMAX, lui, spec.dropout_rate, "alpha", rng)


def build_classifier(spec: ClassifierSpec, rng: np.random.Generator) -> Network:
    return build_mlp(spec, rng) if spec.kind is ModelKind.MLP else build_snn_mlp(spec, rng)


def build_generator(spec: GeneratorSpec, rng: np.random.Generator) -> Network:
    """Input: noise ++ one-hot label. Tanh hidden stack and tanh output."""
    dims = [spec.input_dim, *spec.hidden_dims, spec.out_dim]
    return _dense_stack(dims, Activation.TANH, Activation.TANH, glorot_uniform_init, 0.0, "standard", rng)


def generator_input(noise: np.ndarray, labels, num_classes: int) -> np.ndarray:
    return np.hstack([noise, one_hot(labels, num_classes)])


# -------------------------------------------------------- discriminator view


@dataclass
class SourceHead:
    """Linear unit + sigmoid on the classifier's last hidden representation."""

    weights: np.ndarray  # (hidden, 1)
    bias: np.ndarray  # (1,)

    @classmethod
    def init(cls, hidden_dim: int, rng: np.random.Generator) -> SourceHead:
        return cls(glorot_uniform_init(hidden_dim, 1, rng), np.zeros(1))

    @classmethod
    def zeros(cls, hidden_dim: int) -> SourceHead:
        return cls(np.zeros((hidden_dim, 1)), np.zeros(1))

    def as_weights(self) -> ModelWeights:
        return ModelWeights([(self.weights.copy(), self.bias.copy())])

    def set_weights(self, w: ModelWeights) -> None:
        (self.weights, self.bias), = [(a.copy(), b.copy()) for a, b in w.layers]


@dataclass
class DualHeadOutput:
    class_probs: np.ndarray
    source_prob: np.ndarray
    cache: ForwardCache | None = field(default=None, repr=False)
    source_logit: np.ndarray | None = field(default=None, repr=False)


def classifier_as_discriminator(
    model: Network,
    x,
    head: SourceHead | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> DualHeadOutput:
    """Class softmax from the classifier plus a real-vs-fake probability.

    The source head only reads the classifier's last hidden representation,
    so ``class_probs`` equals a plain ``model.forward`` on the same input.
    """
    if head is None:
        head = SourceHead.zeros(model.layers[-1].fan_in)
    if head.weights.shape != (model.layers[-1].fan_in, 1):
        raise DimensionError(f"source head shape {head.weights.shape} does not fit the classifier")
    probs, cache = model.forward(x, training=training, rng=rng)
    logit = (cache.last_hidden @ head.weights + head.bias)[:, 0]
    return DualHeadOutput(probs, sigmoid(logit), cache, logit)


def discriminator_backward(
    model: Network,
    head: SourceHead,
    out: DualHeadOutput,
    class_labels,
    source_targets: np.ndarray,
    class_weight: float = 1.0,
):
    """Gradients of ``BCE(source) + class_weight * CE(class)`` (both batch means).

    ``class_weight`` may be a scalar or one weight per row.

    Returns ``(classifier_grads, head_grads, input_grad)``.
    """
    n = len(source_targets)
    probs = out.class_probs
    dlogits = probs.copy()
    dlogits[np.arange(n), np.asarray(class_labels, dtype=np.intp)] -= 1.0
    w = np.asarray(class_weight, dtype=np.float64)
    dlogits *= (w[:, None] if w.ndim else w) / n
    ds = ((out.source_prob - source_targets) / n)[:, None]  # d BCE / d logit
    hidden = out.cache.last_hidden
    head_grads = ModelWeights([(hidden.T @ ds, ds.sum(axis=0))])
    grads, dx = model.backward_from(out.cache, grad_logits=dlogits, hidden_grad=ds @ head.weights.T)
    return grads, head_grads, dx
