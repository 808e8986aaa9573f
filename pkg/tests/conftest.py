import numpy as np
import pytest

from fedat.nn import Network, cross_entropy_loss


def numeric_gradients(net: Network, x, labels, h=1e-5, training=False, mask_seed=None):
    """Central finite differences of the mean cross-entropy over every parameter.

    Uses only forward passes; with ``training=True`` the dropout masks are
    frozen by re-seeding the rng before every evaluation.
    """

    def loss():
        rng = np.random.default_rng(mask_seed) if training else None
        probs = net.forward(x, training=training, rng=rng)[0]
        return cross_entropy_loss(probs, labels)

    out = []
    for layer in net.layers:
        pair = []
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + h
                up = loss()
                arr[idx] = orig - h
                down = loss()
                arr[idx] = orig
                g[idx] = (up - down) / (2 * h)
            pair.append(g)
        out.append(tuple(pair))
    return out


def max_relative_error(analytic, numeric) -> float:
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic.layers, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            err = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-8)
            worst = max(worst, float(err.max()))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
