"""Dense neural-network engine in float64 numpy with exact backpropagation.

Every model in the package (MLP, SNN-MLP, generator) is a :class:`Network`,
an ordered stack of :class:`DenseLayer` objects. Randomness is always drawn
from an explicitly passed ``numpy.random.Generator``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fedat.errors import (
    ContractViolationError,
    DataFormatError,
    DimensionError,
    DivergenceError,
    InvalidHyperparameterError,
    InvalidLabelError,
)

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
PROB_CLAMP = 1e-12


class Activation(str, enum.Enum):
    RELU = "relu"
    SELU = "selu"
    TANH = "tanh"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


@dataclass(frozen=True)
class SeluParams:
    lam: float = SELU_LAMBDA
    alpha: float = SELU_ALPHA

    def __post_init__(self):
        if not self.lam > 1.0 or not self.alpha > 0.0:
            raise InvalidHyperparameterError(
                f"SELU needs lambda > 1 and alpha > 0, got lambda={self.lam}, alpha={self.alpha}"
            )

    @property
    def saturation(self) -> float:
        """Lower asymptote -lambda*alpha."""
        return -self.lam * self.alpha


DEFAULT_SELU = SeluParams()


# ---------------------------------------------------------------- activations


def selu(x, p: SeluParams = DEFAULT_SELU):
    """Scaled exponential linear unit; accepts scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, p.lam * x, p.lam * p.alpha * np.expm1(np.minimum(x, 0.0)))
    return float(out) if out.ndim == 0 else out


def selu_grad(x, p: SeluParams = DEFAULT_SELU):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, p.lam, p.lam * p.alpha * np.exp(np.minimum(x, 0.0)))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split branches so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.SELU:
        return selu(z)
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.SOFTMAX:
        return softmax(z)
    return z


def _activation_vjp(kind: Activation, z: np.ndarray, a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the pre-activation given gradient ``g`` w.r.t. the output."""
    if kind is Activation.RELU:
        return g * (z > 0)  # subgradient 0 at the kink
    if kind is Activation.SELU:
        # for z <= 0 the derivative is a + lambda*alpha
        return g * np.where(z > 0, SELU_LAMBDA, a - DEFAULT_SELU.saturation)
    if kind is Activation.TANH:
        return g * (1.0 - a * a)
    if kind is Activation.SOFTMAX:
        return a * (g - (g * a).sum(axis=1, keepdims=True))
    return g


# ------------------------------------------------------------------- dropout


def alpha_dropout_coefficients(rate: float, p: SeluParams = DEFAULT_SELU) -> tuple[float, float]:
    """Affine ``(a, b)`` that restores zero mean / unit variance after alpha dropout."""
    keep = 1.0 - rate
    sat = p.saturation
    a = (keep * (1.0 + rate * sat * sat)) ** -0.5
    b = -a * rate * sat
    return a, b


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise InvalidHyperparameterError(f"dropout rate must be in [0, 1), got {rate}")


def _alpha_dropout_with_mask(x, rate, rng):
    keep = rng.random(x.shape) >= rate
    a, b = alpha_dropout_coefficients(rate)
    out = a * np.where(keep, x, DEFAULT_SELU.saturation) + b
    # d out / d x = a on kept units, 0 on dropped ones
    return out, keep * a


def alpha_dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    """Dropout variant for SELU networks.

    Dropped units are set to the SELU saturation value and the result is
    affinely rescaled so the mean and variance of a standardized input are
    preserved in expectation. Outside training, or with ``rate == 0``, the
    input is returned unchanged.
    """
    _check_rate(rate)
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractViolationError("alpha_dropout in training mode needs an rng")
    return _alpha_dropout_with_mask(x, rate, rng)[0]


def _standard_dropout_with_mask(x, rate, rng):
    scale = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * scale, scale


def dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    """Inverted dropout (zero the unit, rescale survivors by 1/(1-rate))."""
    _check_rate(rate)
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractViolationError("dropout in training mode needs an rng")
    return _standard_dropout_with_mask(x, rate, rng)[0]


# -------------------------------------------------------------- initializers


def lecun_uniform_init(fan_in: int, shape, rng: np.random.Generator) -> np.ndarray:
    """Entries i.i.d. U(-sqrt(3/fan_in), sqrt(3/fan_in)), i.e. variance 1/fan_in."""
    if fan_in < 1:
        raise DimensionError(f"fan_in must be >= 1, got {fan_in}")
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def glorot_uniform_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    if fan_in < 1 or fan_out < 1:
        raise DimensionError(f"invalid layer shape ({fan_in}, {fan_out})")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


# -------------------------------------------------------------------- losses


def _check_labels(labels, num_classes: int, n_rows: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n_rows,):
        raise DimensionError(f"expected {n_rows} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidLabelError(f"labels must lie in [0, {num_classes})")
    return labels.astype(np.intp, copy=False)


def cross_entropy_loss(probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood; probabilities are clamped at 1e-12 before the log."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(labels, probs.shape[1], probs.shape[0])
    picked = probs[np.arange(len(labels)), labels]
    loss = float(-np.log(np.maximum(picked, PROB_CLAMP)).mean())
    if not np.isfinite(loss):
        raise DivergenceError("cross-entropy loss is not finite")
    return loss


def binary_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    probs = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(-(targets * np.log(probs) + (1.0 - targets) * np.log1p(-probs)).mean())
    if not np.isfinite(loss):
        raise DivergenceError("binary cross-entropy loss is not finite")
    return loss


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


# ------------------------------------------------------------------- weights


@dataclass
class ModelWeights:
    """Ordered ``(weight, bias)`` pairs, one per dense layer."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    def copy(self) -> ModelWeights:
        return ModelWeights([(w.copy(), b.copy()) for w, b in self.layers])

    def shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        return [(w.shape, b.shape) for w, b in self.layers]

    def combinable(self, other: ModelWeights) -> bool:
        return self.shapes() == other.shapes()

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def arrays(self):
        for w, b in self.layers:
            yield w
            yield b

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, flat: np.ndarray) -> ModelWeights:
        """Inverse of :meth:`flat` using this object's shapes; returns views into ``flat``."""
        out, pos = [], 0
        for w, b in self.layers:
            nw = pos + w.size
            nb = nw + b.size
            out.append((flat[pos:nw].reshape(w.shape), flat[nw:nb]))
            pos = nb
        return ModelWeights(out)

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def map2(self, other: ModelWeights, fn) -> ModelWeights:
        if not self.combinable(other):
            raise DimensionError(f"weight shapes differ: {self.shapes()} vs {other.shapes()}")
        return ModelWeights([(fn(w, ow), fn(b, ob)) for (w, b), (ow, ob) in zip(self.layers, other.layers)])

    def squared_distance(self, other: ModelWeights) -> float:
        return float(sum(np.sum((a - b) ** 2) for a, b in zip(self.arrays(), other.arrays())))

    def bit_equal(self, other: ModelWeights) -> bool:
        return self.combinable(other) and all(
            a.tobytes() == b.tobytes() for a, b in zip(self.arrays(), other.arrays())
        )


CHECKPOINT_HEADER = "fedat-weights v1"


def _fmt(values: np.ndarray) -> str:
    return " ".join(format(float(v), ".17g") for v in values.ravel())


def dumps_weights(weights: ModelWeights, activations: list[str]) -> str:
    """Text checkpoint; 17 significant digits make the float64 round trip exact."""
    if len(activations) != len(weights.layers):
        raise DimensionError("one activation name per layer is required")
    lines = [CHECKPOINT_HEADER, f"layers {len(weights.layers)}"]
    for i, ((w, b), act) in enumerate(zip(weights.layers, activations)):
        lines.append(f"layer {i} {act} {w.shape[0]} {w.shape[1]}")
        lines.append("W " + _fmt(w))
        lines.append("b " + _fmt(b))
    return "\n".join(lines) + "\n"


def loads_weights(text: str) -> tuple[ModelWeights, list[str]]:
    lines = text.splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise DataFormatError("not a fedat weights checkpoint")
    try:
        n = int(lines[1].split()[1])
        layers, acts = [], []
        for i in range(n):
            _, idx, act, rows, cols = lines[2 + 3 * i].split()
            rows, cols = int(rows), int(cols)
            wtag, *wvals = lines[3 + 3 * i].split()
            btag, *bvals = lines[4 + 3 * i].split()
            if int(idx) != i or wtag != "W" or btag != "b":
                raise DataFormatError(f"malformed layer block {i}")
            w = np.array([float(v) for v in wvals]).reshape(rows, cols)
            b = np.array([float(v) for v in bvals]).reshape(cols)
            layers.append((w, b))
            acts.append(act)
    except (IndexError, ValueError) as exc:
        raise DataFormatError(f"malformed checkpoint: {exc}") from exc
    return ModelWeights(layers), acts


# ------------------------------------------------------------------- network


@dataclass
class DenseLayer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray
    activation: Activation
    dropout: float = 0.0
    dropout_kind: str = "standard"  # "standard" or "alpha"

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise DimensionError(
                f"weights {self.weights.shape} and bias {self.bias.shape} do not form a dense layer"
            )
        _check_rate(self.dropout)
        if self.dropout_kind not in ("standard", "alpha"):
            raise InvalidHyperparameterError(f"unknown dropout kind {self.dropout_kind!r}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class ForwardCache:
    version: tuple[int, int]
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)  # activation output, before dropout
    masks: list[np.ndarray | None] = field(default_factory=list)  # d(dropout out)/d(post)
    output: np.ndarray | None = None

    @property
    def last_hidden(self) -> np.ndarray:
        """Representation fed into the final layer."""
        return self.inputs[-1]


class Network:
    """Feed-forward stack of dense layers. Single-writer: not thread safe per instance."""

    _ids = 0

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise DimensionError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise DimensionError(f"layer widths do not chain: {prev.fan_out} -> {nxt.fan_in}")
        self.layers = layers
        Network._ids += 1
        self._id = Network._ids
        self._version = 0

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def activations(self) -> list[str]:
        return [layer.activation.value for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.weights.size + layer.bias.size for layer in self.layers)

    def get_weights(self) -> ModelWeights:
        return ModelWeights([(layer.weights.copy(), layer.bias.copy()) for layer in self.layers])

    def set_weights(self, weights: ModelWeights, copy: bool = True) -> None:
        """Load weights; ``copy=False`` adopts the arrays (caller must not reuse them)."""
        if len(weights.layers) != len(self.layers) or any(
            w.shape != layer.weights.shape or b.shape != layer.bias.shape
            for layer, (w, b) in zip(self.layers, weights.layers)
        ):
            raise DimensionError(f"cannot load weights of shapes {weights.shapes()}")
        for layer, (w, b) in zip(self.layers, weights.layers):
            layer.weights = w.copy() if copy else w
            layer.bias = b.copy() if copy else b
        self._version += 1

    def view_weights(self) -> ModelWeights:
        """Current weights without copying; read-only by convention."""
        return ModelWeights([(layer.weights, layer.bias) for layer in self.layers])

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        """Returns ``(output, cache)``; ``cache`` feeds :meth:`backward`."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"expected input with {self.input_dim} columns, got shape {x.shape}")
        cache = ForwardCache(version=(self._id, self._version))
        a = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            cache.inputs.append(a)
            z = a @ layer.weights + layer.bias
            h = _activate(layer.activation, z)
            cache.pre.append(z)
            cache.post.append(h)
            mask = None
            if i < last and training and layer.dropout > 0.0:
                if rng is None:
                    raise ContractViolationError("training-mode forward with dropout needs an rng")
                if layer.dropout_kind == "alpha":
                    h, mask = _alpha_dropout_with_mask(h, layer.dropout, rng)
                else:
                    h, mask = _standard_dropout_with_mask(h, layer.dropout, rng)
            cache.masks.append(mask)
            a = h
        if not np.isfinite(a).all():
            raise DivergenceError("non-finite network output")
        cache.output = a
        return a, cache

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def _check_cache(self, cache: ForwardCache) -> None:
        if cache.version != (self._id, self._version) or len(cache.pre) != len(self.layers):
            raise ContractViolationError("forward cache does not belong to the current weights of this network")

    def _backprop(self, cache: ForwardCache, dz: np.ndarray, hidden_grad: np.ndarray | None):
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            grads[i] = (cache.inputs[i].T @ dz, dz.sum(axis=0))
            da = dz @ layer.weights.T
            if i == len(self.layers) - 1 and hidden_grad is not None:
                da = da + hidden_grad
            if i == 0:
                return ModelWeights(grads), da
            prev = self.layers[i - 1]
            if cache.masks[i - 1] is not None:
                da = da * cache.masks[i - 1]
            dz = _activation_vjp(prev.activation, cache.pre[i - 1], cache.post[i - 1], da)

    def backward(self, cache: ForwardCache, labels) -> ModelWeights:
        """Exact gradient of the mean cross-entropy of a softmax network."""
        self._check_cache(cache)
        if self.layers[-1].activation is not Activation.SOFTMAX:
            raise ContractViolationError("cross-entropy backward requires a softmax output layer")
        probs = cache.output
        labels = _check_labels(labels, probs.shape[1], probs.shape[0])
        dz = probs.copy()
        dz[np.arange(len(labels)), labels] -= 1.0
        dz /= len(labels)
        return self._backprop(cache, dz, None)[0]

    def backward_from(self, cache: ForwardCache, grad_output=None, grad_logits=None, hidden_grad=None):
        """General reverse pass.

        Give either ``grad_output`` (w.r.t. the activated output) or
        ``grad_logits`` (w.r.t. the final pre-activation). ``hidden_grad`` is
        an extra gradient arriving at the input of the last layer, used by
        auxiliary heads. Returns ``(weight_grads, input_grad)``.
        """
        self._check_cache(cache)
        if (grad_output is None) == (grad_logits is None):
            raise ContractViolationError("pass exactly one of grad_output / grad_logits")
        if grad_logits is None:
            last = self.layers[-1]
            grad_logits = _activation_vjp(last.activation, cache.pre[-1], cache.post[-1], grad_output)
        return self._backprop(cache, grad_logits, hidden_grad)


# ---------------------------------------------------------------- optimizers


@dataclass
class OptimizerState:
    kind: str  # "sgd" or "adam"
    eta: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None  # flat, parameter order of ModelWeights.flat()
    v: np.ndarray | None = None
    step: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise InvalidHyperparameterError(f"unknown optimizer {self.kind!r}")
        if not self.eta > 0:
            raise InvalidHyperparameterError(f"learning rate must be positive, got {self.eta}")


def sgd(eta: float) -> OptimizerState:
    return OptimizerState("sgd", eta)


def adam(eta: float = 0.001) -> OptimizerState:
    return OptimizerState("adam", eta)


def optimizer_step(state: OptimizerState, weights: ModelWeights, grads: ModelWeights) -> ModelWeights:
    """One update. Mutates ``state`` (moments, step counter); returns new weights."""
    if not weights.combinable(grads):
        raise DimensionError(f"gradient shapes {grads.shapes()} do not match weights {weights.shapes()}")
    p = weights.flat()
    g = grads.flat()
    state.step += 1
    if state.kind == "sgd":
        p -= state.eta * g
    else:
        if state.m is None:
            state.m = np.zeros_like(p)
            state.v = np.zeros_like(p)
        elif state.m.shape != p.shape:
            raise DimensionError("Adam moments do not match parameter shapes")
        state.m *= state.beta1
        state.m += (1.0 - state.beta1) * g
        state.v *= state.beta2
        state.v += (1.0 - state.beta2) * (g * g)
        c1 = 1.0 - state.beta1**state.step
        c2 = 1.0 - state.beta2**state.step
        p -= state.eta * (state.m / c1) / (np.sqrt(state.v / c2) + state.eps)
    return weights.unflatten(p)


def save_checkpoint(path, network: Network) -> None:
    Path(path).write_text(dumps_weights(network.get_weights(), network.activations))


def load_checkpoint(path) -> tuple[ModelWeights, list[str]]:
    return loads_weights(Path(path).read_text())
