"""Activation collection and post-condition labeling.

Produces, for every selected layer, the matrix of neuron values (or their
on/off indicators) over a dataset, plus one label per input obtained by
evaluating a post-condition shortcut on the model's output.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, MissingLabels, SentinelCollision
from .network import LayerTap, Network, dense_taps, forward, forward_to_layer
from .tensor_io import Dataset

DEFAULT_SENTINEL = 1000
# layer name used when the dataset already holds activation vectors
INPUT_LAYER = "inputs"


@dataclass(frozen=True)
class PostCondition:
    """Labeling shortcut.

    0: predicted class; 1: correct (1) / incorrect (0); 2: predicted class when
    correct, else the sentinel; 3: labels taken verbatim from the dataset.
    """

    kind: int = 0
    sentinel: int = DEFAULT_SENTINEL
    mode: str = "argmax"

    def __post_init__(self):
        if self.kind not in (0, 1, 2, 3):
            raise ValueError(f"post-condition type must be 0..3, got {self.kind}")


@dataclass(frozen=True)
class ExtractionConfig:
    layer_name: Optional[str] = None
    only_dense: bool = False
    dense_activations: bool = False
    acts: bool = False
    inptype: int = 0
    balance: bool = False
    use_confidence: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.inptype not in (0, 1):
            raise ValueError("inptype must be 0 or 1")
        if self.inptype == 0:
            explicit = self.layer_name is not None
            grouped = self.only_dense or self.dense_activations
            if explicit == grouped:
                raise ValueError("select layers with exactly one of layer_name or -odl/-oal")

    def taps(self, net: Optional[Network]):
        if self.inptype == 1:
            return [LayerTap(INPUT_LAYER)]
        if self.layer_name is not None:
            tap = LayerTap.parse(self.layer_name)
            net.layer_index(tap.layer_name)
            return [tap]
        # -odl taps the affine output of each dense layer, -oal its activation
        return dense_taps(net, pre=self.only_dense, post=self.dense_activations)


@dataclass(frozen=True)
class ActivationMatrix:
    layer: LayerTap
    rows: np.ndarray
    acts: bool = False

    def __post_init__(self):
        if self.acts and not np.isin(self.rows, (0, 1)).all():
            raise ValueError("on/off matrices must be 0/1")

    def __len__(self):
        return self.rows.shape[0]


def binarize(values) -> np.ndarray:
    """On/off indicator: on iff strictly positive, so exact zeros are off."""
    return (np.asarray(values) > 0).astype(np.int64)


def layer_values(net: Optional[Network], x, tap: LayerTap, acts: bool, inptype: int = 0):
    if inptype == 1:
        v = np.asarray(x, dtype=np.float64)
    else:
        v = forward_to_layer(net, x, tap)
    return binarize(v) if acts else v


def collect_activations(net: Optional[Network], data: Dataset, cfg: ExtractionConfig):
    out = []
    x = data.inputs
    for tap in cfg.taps(net):
        if len(data) == 0:
            width = x.shape[1] if (cfg.inptype == 1 or net is None) else net.tap_dim(tap)
            rows = np.zeros((0, width), dtype=np.int64 if cfg.acts else np.float64)
        else:
            rows = layer_values(net, x, tap, cfg.acts, cfg.inptype)
        out.append(ActivationMatrix(tap, rows, cfg.acts))
    return out


def label_dataset(net: Optional[Network], data: Dataset, post: PostCondition) -> np.ndarray:
    """Label vector L, one entry per input."""
    kind = post.kind
    if kind in (1, 2, 3) and data.labels is None:
        raise MissingLabels(f"post-condition type {kind} needs ground-truth labels")
    if kind == 3:
        return np.asarray(data.labels).astype(np.int64)
    if len(data) == 0:
        return np.zeros(0, dtype=np.int64)
    if net is None:
        raise ValueError(f"post-condition type {kind} needs a model")
    logits = forward(net, data.inputs)
    fn = np.argmax if post.mode == "argmax" else np.argmin
    pred = fn(logits, axis=1).astype(np.int64)
    if kind == 0:
        return pred
    y = np.asarray(data.labels).astype(np.int64)
    if kind == 1:
        return (pred == y).astype(np.int64)
    if np.any(y == post.sentinel):
        raise SentinelCollision(f"a true class id equals the sentinel {post.sentinel}")
    return np.where(pred == y, pred, post.sentinel).astype(np.int64)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sample_weights(labels, *, balance=False, logits=None) -> Optional[np.ndarray]:
    """Per-sample weights for tree fitting.

    ``balance`` weights each sample by the inverse frequency of its label
    (normalised so the weights sum to N); ``logits`` multiplies in the
    model's max softmax probability. Returns None when neither applies.
    """
    labels = np.asarray(labels)
    if not balance and logits is None:
        return None
    w = np.ones(labels.shape[0], dtype=np.float64)
    if balance and labels.size:
        classes, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
        w *= labels.size / (classes.size * counts[inverse])
    if logits is not None:
        conf = softmax(logits).max(axis=1)
        if conf.shape[0] != w.shape[0]:
            raise DimensionMismatch("confidence vector does not match labels")
        w *= conf
    return w
