import math

import numpy as np
import pytest

from conftest import random_net
from lyapnet.diffmath import fd_gradient, rel_error
from lyapnet.errors import SchemaError, ShapeMismatch
from lyapnet.network import (
    LyapunovNet,
    NetShape,
    deserialize,
    forward,
    from_document,
    grad_x,
    identity_first_layer,
    init,
    param_count,
    serialize,
    sublayer_outputs,
    to_document,
)


def reference_forward(net, x):
    """Layer-by-layer evaluation written independently of the kernels."""
    n, s, d, m = net.shape.dims
    w1, b1, w2, b2, a, c = (np.array(b) for b in net.blocks)
    y1 = w1 @ x + b1
    total = 0.0
    for i in range(s):
        zi = y1[i * d:(i + 1) * d]
        for k in range(m):
            u = float(w2[i, k] @ zi + b2[i, k])
            total += a[i, k] * math.log(1.0 + math.exp(u))
    return total + c[0]


@pytest.mark.parametrize(
    "dims, count", [((2, 2, 1, 128), 775), ((10, 5, 2, 128), 2671), ((1, 1, 1, 1), 6)]
)
def test_param_count(dims, count):
    shape = NetShape(*dims)
    assert param_count(shape) == count
    assert init(shape, 0).theta.size == count


def test_param_count_matches_blocks_for_many_shapes():
    for dims in [(1, 1, 1, 1), (3, 2, 2, 4), (5, 5, 1, 7), (4, 2, 3, 2), (6, 1, 6, 3)]:
        net = init(NetShape(*dims), 1)
        assert sum(b.size for b in net.blocks) == param_count(net.shape) == net.theta.size


def test_shape_validation():
    with pytest.raises(ValueError):
        NetShape(2, 0, 1, 1)
    with pytest.warns(UserWarning):
        NetShape(2, 3, 1, 1)


def test_init_deterministic():
    shape = NetShape(10, 5, 2, 128)
    a, b = init(shape, 42), init(shape, 42)
    assert a.theta.tobytes() == b.theta.tobytes()
    assert init(shape, 43).theta.tobytes() != a.theta.tobytes()


def test_init_ranges_and_zero_biases():
    net = init(NetShape(10, 5, 2, 128), 3)
    w1, b1, w2, b2, a, c = net.blocks
    assert np.all(b1 == 0) and np.all(b2 == 0) and c[0] == 0
    assert np.max(np.abs(w1)) <= math.sqrt(6 / 20)
    assert np.max(np.abs(w2)) <= math.sqrt(6 / 130)
    assert np.max(np.abs(a)) <= math.sqrt(6 / 641)


def test_zero_net():
    net = LyapunovNet(NetShape(3, 2, 2, 4))
    X = np.random.default_rng(0).normal(size=(10, 3))
    assert np.all(forward(net, X) == 0)
    assert np.all(grad_x(net, X) == 0)


def single_neuron():
    net = LyapunovNet(NetShape(2, 1, 1, 1))
    w1, b1, w2, b2, a, c = net.blocks
    w1[0] = [1.0, 0.0]
    w2[0, 0, 0] = 1.0
    a[0, 0] = 1.0
    return net


def test_single_neuron_value_and_gradient():
    net = single_neuron()
    assert forward(net, np.array([0.0, 5.0])) == pytest.approx(math.log(2.0), abs=1e-15)
    np.testing.assert_allclose(grad_x(net, np.array([0.0, 5.0])), [0.5, 0.0], atol=1e-15)


def test_forward_matches_reference(rng):
    for seed in range(10):
        net = random_net(NetShape(4, 2, 2, 5), seed)
        x = rng.uniform(-2, 2, 4)
        assert forward(net, x) == pytest.approx(reference_forward(net, x), rel=1e-13, abs=1e-13)


def test_grad_x_matches_finite_differences(rng):
    for seed in range(100):
        n = int(rng.integers(1, 4))
        shape = NetShape(n, int(rng.integers(1, n + 1)), int(rng.integers(1, 3)), int(rng.integers(1, 9)))
        net = random_net(shape, seed)
        x = rng.uniform(-2, 2, n)
        assert rel_error(grad_x(net, x), fd_gradient(lambda y: forward(net, y), x, 1e-4)) < 1e-5


def test_batch_and_single_agree(rng):
    net = random_net(NetShape(3, 2, 2, 4), 1)
    X = rng.uniform(-1, 1, (5, 3))
    np.testing.assert_array_equal(forward(net, X), [forward(net, x) for x in X])
    np.testing.assert_array_equal(grad_x(net, X), np.array([grad_x(net, x) for x in X]))


def test_sublayer_additivity(rng):
    net = random_net(NetShape(6, 3, 2, 5), 2)
    X = rng.uniform(-1, 1, (50, 6))
    np.testing.assert_allclose(sublayer_outputs(net, X).sum(axis=1), forward(net, X) - net.c, rtol=1e-13, atol=1e-13)


def test_disconnected_sublayer_is_constant(rng):
    net = random_net(NetShape(4, 2, 2, 6), 3)
    w1, b1 = net.blocks[:2]
    w1[2:4] = 0.0
    b1[2:4] = 0.0
    contrib = sublayer_outputs(net, rng.uniform(-1, 1, (20, 4)))[:, 1]
    assert np.all(contrib == contrib[0])


def test_identity_first_layer():
    net = identity_first_layer(init(NetShape(3, 3, 1, 2), 0))
    np.testing.assert_array_equal(net.w1, np.eye(3))


def test_serialize_roundtrip_bitwise(rng):
    net = random_net(NetShape(3, 2, 2, 4), 4)
    back = deserialize(serialize(net))
    assert back.shape == net.shape
    assert back.theta.tobytes() == net.theta.tobytes()
    X = rng.uniform(-1, 1, (100, 3))
    assert forward(back, X).tobytes() == forward(net, X).tobytes()


def test_serialize_2d_shape_count():
    net = init(NetShape(2, 2, 1, 128), 0)
    assert param_count(deserialize(serialize(net)).shape) == 775


def test_missing_field():
    doc = to_document(init(NetShape(2, 1, 1, 2), 0))
    del doc["a"]
    with pytest.raises(SchemaError):
        from_document(doc)


def test_shape_mismatch():
    doc = to_document(init(NetShape(2, 1, 1, 2), 0))
    doc["b2"] = [[0.0, 0.0, 0.0]]
    with pytest.raises(ShapeMismatch):
        from_document(doc)


def test_malformed_json():
    with pytest.raises(SchemaError):
        deserialize("{not json")
    with pytest.raises(SchemaError):
        deserialize("[]")


def test_wrong_input_length():
    with pytest.raises(ShapeMismatch):
        forward(init(NetShape(2, 1, 1, 2), 0), np.zeros(3))
