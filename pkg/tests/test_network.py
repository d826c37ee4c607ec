import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerrules.errors import (DimensionMismatch, DuplicateLayerName, NonFiniteInput, ShapeMismatch,
                               UnknownActivation, UnknownLayer)
from layerrules.network import (DenseLayer, LayerTap, Network, extreme_index, forward,
                                forward_to_layer, load_model, predict, save_model, truncate)
from oracles import random_network, straight_line_forward

W1, B1 = [[1.0, -1.0], [0.0, 1.0]], [0.0, 0.0]
W2, B2 = [[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]


def hand_net():
    return Network.from_arrays([W1, W2], [B1, B2])


def test_identity_construction():
    net = Network.from_arrays([np.eye(2), np.eye(2)], [np.zeros(2)] * 2)
    assert net.input_dim == 2 and net.output_dim == 2


def test_shape_chain_broken():
    a = DenseLayer("a", np.ones((2, 2)), np.zeros(2), "relu")
    b = DenseLayer("b", np.ones((1, 3)), np.zeros(1), "linear")
    with pytest.raises(ShapeMismatch):
        Network((a, b), 2)


def test_acas_shape():
    rng = np.random.default_rng(0)
    dims = [5] + [50] * 6 + [5]
    net = Network.from_arrays([rng.normal(size=(dims[i + 1], dims[i])) for i in range(7)],
                              [np.zeros(dims[i + 1]) for i in range(7)])
    assert len(net.layers) == 7 and net.layers[-1].activation == "linear"
    x = rng.normal(size=5)
    y = forward(net, x)
    assert predict(net, x, "argmin") == int(np.argmin(y))


def test_bad_definitions():
    with pytest.raises(UnknownActivation):
        DenseLayer("a", np.ones((1, 1)), np.zeros(1), "tanh")
    a = DenseLayer("a", np.ones((1, 1)), np.zeros(1))
    with pytest.raises(DuplicateLayerName):
        Network((a, a), 1)


def test_identity_forward():
    net = Network.from_arrays([np.eye(2)], [np.zeros(2)])
    assert forward(net, [3.5, -1.0]).tolist() == [3.5, -1.0]


def test_hand_example():
    net = hand_net()
    expected = straight_line_forward([W1, W2], [B1, B2], ["relu", "linear"], [1, 2])
    assert expected == [0.0, 2.0]
    assert forward(net, [1.0, 2.0]).tolist() == expected
    assert forward_to_layer(net, [1.0, 2.0], LayerTap("dense_0", False)).tolist() == [-1.0, 2.0]
    assert forward_to_layer(net, [1.0, 2.0], LayerTap("dense_0")).tolist() == [0.0, 2.0]


def test_relu_kill():
    net = Network.from_arrays([np.ones((3, 2)), np.ones((2, 3))], [-np.ones(3), [0.25, -4.0]])
    assert forward(net, [0.0, 0.0]).tolist() == [0.25, -4.0]


def test_forward_errors():
    net = hand_net()
    with pytest.raises(DimensionMismatch):
        forward(net, [1.0, 2.0, 3.0])
    with pytest.raises(NonFiniteInput):
        forward(net, [np.nan, 0.0])
    with pytest.raises(UnknownLayer):
        forward_to_layer(net, [0, 0], LayerTap("nope"))


def test_last_layer_tap_is_forward():
    rng = np.random.default_rng(1)
    net = random_network(rng)
    x = rng.normal(size=net.input_dim)
    np.testing.assert_array_equal(forward_to_layer(net, x, LayerTap(net.layers[-1].name)),
                                  forward(net, x))


def test_truncate_structure():
    rng = np.random.default_rng(2)
    net = Network.from_arrays([rng.normal(size=(3, 2)), rng.normal(size=(3, 3)),
                               rng.normal(size=(2, 3))], [np.zeros(3), np.zeros(3), np.zeros(2)])
    assert truncate(net, LayerTap(net.layers[-1].name)) == net
    assert len(truncate(net, LayerTap("dense_1")).layers) == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_truncate_matches_tap(seed, post):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    k = int(rng.integers(len(net.layers)))
    tap = LayerTap(net.layers[k].name, post)
    X = rng.normal(size=(100, net.input_dim))
    np.testing.assert_array_equal(forward(truncate(net, tap), X), forward_to_layer(net, X, tap))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_batch_equals_rows_and_straight_line(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    X = rng.normal(size=(5, net.input_dim))
    Y = forward(net, X)
    Ws = [l.weights for l in net.layers]
    bs = [l.bias for l in net.layers]
    acts = [l.activation for l in net.layers]
    for x, y in zip(X, Y):
        np.testing.assert_array_equal(forward(net, x), y)
        assert y.tolist() == straight_line_forward(Ws, bs, acts, x)


def test_extreme_index():
    assert extreme_index([0.1, 0.9, 0.3]) == 1
    assert extreme_index([0.5, 0.5]) == 0
    assert extreme_index([0.5, 0.2, 0.2], "argmin") == 1


def test_tap_parse():
    assert LayerTap.parse("dense_3") == LayerTap("dense_3", True)
    assert LayerTap.parse("dense_3:pre") == LayerTap("dense_3", False)
    assert str(LayerTap("x", False)) == "x:pre"


def test_model_roundtrip(tmp_path):
    net = random_network(np.random.default_rng(4))
    save_model(net, tmp_path / "m.json")
    assert load_model(tmp_path / "m.json") == net
