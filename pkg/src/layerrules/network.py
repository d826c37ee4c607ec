"""Dense ReLU networks: loading, exact forward evaluation, layer taps.

All arithmetic is float64. Affine maps accumulate each output's dot product
left to right over the input columns and add the bias last, so a row's
result never depends on how many rows are evaluated together. That makes
counterexample replay and anchor points bit-reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (DimensionMismatch, DuplicateLayerName, NonFiniteInput, SchemaViolation,
                     ShapeMismatch, UnknownActivation, UnknownLayer)

ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class LayerTap:
    """A point in the network to read values from.

    ``post_activation=False`` reads the affine value before the layer's
    activation function. The string form is ``name`` for post-activation and
    ``name:pre`` for pre-activation taps.
    """

    layer_name: str
    post_activation: bool = True

    def __str__(self):
        return self.layer_name if self.post_activation else f"{self.layer_name}:pre"

    @classmethod
    def parse(cls, text: str) -> "LayerTap":
        if text.endswith(":pre"):
            return cls(text[:-4], False)
        return cls(text, True)


@dataclass(frozen=True, eq=False)
class DenseLayer:
    name: str
    weights: np.ndarray  # O x I_k
    bias: np.ndarray  # O
    activation: str = "relu"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, ndmin=2)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise UnknownActivation(f"layer {self.name!r}: unknown activation {self.activation!r}")
        if w.ndim != 2:
            raise ShapeMismatch(f"layer {self.name!r}: weights must be 2-D")
        if b.shape[0] != w.shape[0]:
            raise ShapeMismatch(
                f"layer {self.name!r}: bias length {b.shape[0]} != weight rows {w.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise SchemaViolation(f"layer {self.name!r}: non-finite parameters")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def affine(self, x: np.ndarray) -> np.ndarray:
        return affine(x, self.weights, self.bias)

    def activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return relu(z)
        return z

    def __eq__(self, other):
        if not isinstance(other, DenseLayer):
            return NotImplemented
        return (self.name == other.name and self.activation == other.activation
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.bias, other.bias))

    __hash__ = None


def relu(z):
    return np.maximum(z, 0.0)


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``x @ w.T + b`` for a batch ``x`` (N x I) with a fixed summation order."""
    acc = np.zeros((x.shape[0], w.shape[0]), dtype=np.float64)
    for j in range(w.shape[1]):
        acc += x[:, j, None] * w[None, :, j]
    acc += b
    return acc


@dataclass(frozen=True, eq=False)
class Network:
    layers: tuple
    input_dim: int
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeMismatch("a network needs at least one layer")
        index = {}
        width = int(self.input_dim)
        for k, layer in enumerate(layers):
            if layer.name in index:
                raise DuplicateLayerName(f"duplicate layer name {layer.name!r}")
            if layer.in_dim != width:
                raise ShapeMismatch(
                    f"layer {layer.name!r} expects {layer.in_dim} inputs, previous layer gives {width}")
            index[layer.name] = k
            width = layer.out_dim
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "_index", index)

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def layer_names(self):
        return [l.name for l in self.layers]

    def layer_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownLayer(f"no layer named {name!r}") from None

    def tap_dim(self, tap: LayerTap) -> int:
        return self.layers[self.layer_index(tap.layer_name)].out_dim

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.input_dim == other.input_dim and self.layers == other.layers

    __hash__ = None

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "layers": [
                {"name": l.name, "weights": l.weights.tolist(), "bias": l.bias.tolist(),
                 "activation": l.activation}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "Network":
        try:
            layers = [DenseLayer(str(l["name"]), l["weights"], l["bias"], l.get("activation", "relu"))
                      for l in d["layers"]]
            return cls(tuple(layers), int(d["input_dim"]))
        except (KeyError, TypeError) as exc:
            raise SchemaViolation(f"malformed model document: {exc}") from None

    @classmethod
    def from_arrays(cls, weights: Sequence, biases: Sequence, activations=None, names=None):
        """Convenience constructor; hidden layers relu, last layer linear by default."""
        n = len(weights)
        activations = activations or ["relu"] * (n - 1) + ["linear"]
        names = names or [f"dense_{k}" for k in range(n)]
        layers = [DenseLayer(nm, np.asarray(w, dtype=float), np.asarray(b, dtype=float), act)
                  for nm, w, b, act in zip(names, weights, biases, activations)]
        return cls(tuple(layers), layers[0].in_dim)


def load_model(path) -> Network:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"{path}: {exc}") from None
    return Network.from_dict(doc)


def save_model(net: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(net.to_dict(), fh)


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != net.input_dim:
        raise DimensionMismatch(f"expected inputs of length {net.input_dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("inputs contain NaN or infinity")
    return arr, single


def _run(net: Network, x, stop: int, post: bool):
    h, single = _as_batch(net, x)
    for k in range(stop + 1):
        layer = net.layers[k]
        h = layer.affine(h)
        if k < stop or post:
            h = layer.activate(h)
    return h[0] if single else h


def forward(net: Network, x) -> np.ndarray:
    """Logits for one input (length I) or a batch (N x I)."""
    return _run(net, x, len(net.layers) - 1, True)


def forward_to_layer(net: Network, x, tap: LayerTap) -> np.ndarray:
    return _run(net, x, net.layer_index(tap.layer_name), tap.post_activation)


def truncate(net: Network, tap: LayerTap) -> Network:
    """Prefix network whose output equals ``forward_to_layer(net, x, tap)``."""
    k = net.layer_index(tap.layer_name)
    layers = list(net.layers[: k + 1])
    last = layers[-1]
    if not tap.post_activation and last.activation != "linear":
        layers[-1] = DenseLayer(last.name, last.weights, last.bias, "linear")
    return Network(tuple(layers), net.input_dim)


def extreme_index(values, mode: str = "argmax") -> int:
    """Index of the largest (or smallest) value; ties go to the lowest index."""
    v = np.asarray(values, dtype=np.float64)
    if mode == "argmax":
        return int(np.argmax(v))
    if mode == "argmin":
        return int(np.argmin(v))
    raise ValueError(f"unknown mode {mode!r}")


def predict(net: Network, x, mode: str = "argmax"):
    """Predicted class id(s); np.argmax/argmin already break ties low."""
    if net.output_dim < 2:
        raise DimensionMismatch("classification needs at least two outputs")
    if mode not in ("argmax", "argmin"):
        raise ValueError(f"unknown mode {mode!r}")
    out = forward(net, x)
    if out.ndim == 1:
        return extreme_index(out, mode)
    fn = np.argmax if mode == "argmax" else np.argmin
    return fn(out, axis=1).astype(np.int64)


def dense_taps(net: Network, pre: bool, post: bool, prefix: str = "dense"):
    """Taps for layers whose name starts with ``prefix``."""
    taps = []
    for layer in net.layers:
        if not layer.name.startswith(prefix):
            continue
        if pre:
            taps.append(LayerTap(layer.name, False))
        if post:
            taps.append(LayerTap(layer.name, True))
    return taps
