import numpy as np
import pytest

from fedat.errors import DimensionError, InvalidHyperparameterError
from fedat.models import (
    ClassifierSpec,
    GeneratorSpec,
    SourceHead,
    build_generator,
    build_mlp,
    build_snn_mlp,
    classifier_as_discriminator,
    generator_input,
)
from fedat.nn import selu


def _spec(kind, **kw):
    return ClassifierSpec(kind=kind, input_dim=20, num_classes=4, hidden_dims=(64, 32), **kw)


def test_parameter_counts_match():
    expected = 20 * 64 + 64 + 64 * 32 + 32 + 32 * 4 + 4
    assert expected == 3556
    assert build_mlp(_spec("mlp"), np.random.default_rng(0)).n_params == 3556
    assert build_snn_mlp(_spec("snn_mlp"), np.random.default_rng(0)).n_params == 3556


def test_mlp_structure():
    net = build_mlp(_spec("mlp"), np.random.default_rng(0))
    assert net.activations == ["relu", "relu", "softmax"]
    assert [layer.dropout_kind for layer in net.layers[:-1]] == ["standard", "standard"]
    for layer in net.layers:
        bound = np.sqrt(6 / (layer.fan_in + layer.fan_out))
        assert np.abs(layer.weights).max() <= bound


def test_snn_structure_and_lui_bounds():
    net = build_snn_mlp(_spec("snn_mlp"), np.random.default_rng(0))
    assert net.activations == ["selu", "selu", "softmax"]
    assert [layer.dropout_kind for layer in net.layers[:-1]] == ["alpha", "alpha"]
    for layer in net.layers:
        assert np.abs(layer.weights).max() <= np.sqrt(3 / layer.fan_in)


def test_deterministic_builds():
    a = build_snn_mlp(_spec("snn_mlp"), np.random.default_rng(5)).get_weights()
    b = build_snn_mlp(_spec("snn_mlp"), np.random.default_rng(5)).get_weights()
    assert a.bit_equal(b)


@pytest.mark.parametrize("kind", ["mlp", "snn_mlp"])
def test_zero_dropout_train_equals_inference(kind):
    net = (build_mlp if kind == "mlp" else build_snn_mlp)(_spec(kind, dropout_rate=0.0), np.random.default_rng(1))
    x = np.random.default_rng(2).standard_normal((10, 20))
    train = net.forward(x, training=True, rng=np.random.default_rng(3))[0]
    assert np.array_equal(train, net.forward(x)[0])


def test_wrong_builder_rejected():
    with pytest.raises(InvalidHyperparameterError):
        build_mlp(_spec("snn_mlp"), np.random.default_rng(0))
    with pytest.raises(InvalidHyperparameterError):
        ClassifierSpec(kind="mlp", input_dim=3, num_classes=1)
    with pytest.raises(InvalidHyperparameterError):
        ClassifierSpec(kind="mlp", input_dim=3, num_classes=3, hidden_dims=())


def test_deep_snn_self_normalizes():
    spec = ClassifierSpec(kind="snn_mlp", input_dim=64, num_classes=2, hidden_dims=(64,) * 10, dropout_rate=0.0)
    net = build_snn_mlp(spec, np.random.default_rng(0))
    _, cache = net.forward(np.random.default_rng(1).standard_normal((10_000, 64)))
    for h in cache.post[:-1]:
        assert -0.1 <= h.mean() <= 0.1 and 0.8 <= h.var() <= 1.2


# ---- generator


def test_generator_shapes_and_range():
    spec = GeneratorSpec(latent_dim=20, out_dim=20, num_classes=4)
    gen = build_generator(spec, np.random.default_rng(0))
    assert gen.input_dim == 24
    assert [layer.fan_out for layer in gen.layers] == [32, 64, 128, 20]
    assert gen.activations == ["tanh"] * 4
    z = np.random.default_rng(1).normal(0, 5.0, size=(300, 20))
    out = gen.forward(generator_input(z, np.arange(300) % 4, 4))[0]
    assert out.shape == (300, 20) and np.abs(out).max() <= 1.0


def test_generator_deterministic():
    spec = GeneratorSpec(latent_dim=3, out_dim=3, num_classes=2)
    gen = build_generator(spec, np.random.default_rng(0))
    z = np.random.default_rng(9).standard_normal((4, 3))
    a = gen.forward(generator_input(z, [1, 1, 0, 1], 2))[0]
    b = gen.forward(generator_input(z, [1, 1, 0, 1], 2))[0]
    assert np.array_equal(a, b)


def test_generator_spec_requires_latent_equals_features():
    with pytest.raises(InvalidHyperparameterError):
        GeneratorSpec(latent_dim=5, out_dim=6, num_classes=2)


# ---- dual head


def test_dual_head_contract():
    net = build_snn_mlp(_spec("snn_mlp"), np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((7, 20))
    out = classifier_as_discriminator(net, x, SourceHead.zeros(32))
    assert np.array_equal(out.source_prob, np.full(7, 0.5))
    assert out.source_prob.shape == (7,)
    assert np.array_equal(out.class_probs, net.forward(x)[0])
    trained_head = SourceHead.init(32, np.random.default_rng(2))
    out2 = classifier_as_discriminator(net, x, trained_head)
    assert np.array_equal(out2.class_probs, out.class_probs)
    assert np.all((out2.source_prob >= 0) & (out2.source_prob <= 1))


def test_dual_head_shape_errors():
    net = build_mlp(_spec("mlp"), np.random.default_rng(0))
    with pytest.raises(DimensionError):
        classifier_as_discriminator(net, np.zeros((2, 19)))
    with pytest.raises(DimensionError):
        classifier_as_discriminator(net, np.zeros((2, 20)), SourceHead.zeros(64))


def test_selu_used_by_snn_hidden_layers():
    net = build_snn_mlp(_spec("snn_mlp", dropout_rate=0.0), np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((3, 20))
    _, cache = net.forward(x)
    assert np.allclose(cache.post[0], selu(x @ net.layers[0].weights + net.layers[0].bias), rtol=0, atol=0)
