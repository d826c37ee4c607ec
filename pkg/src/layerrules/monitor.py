"""Runtime tagging of model outputs as correct, incorrect or uncertain.

Each monitored layer casts at most one vote per input: in rules mode the
first rule whose pattern matches (tree paths are disjoint, so at most one
can), in classifiers mode the tree's leaf prediction. Label 1 means the
model's output was correct and label 0 that it was not.
"""
from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import LayerMismatch, UnknownLayer
from .extraction import INPUT_LAYER, binarize
from .network import LayerTap, Network, forward, forward_to_layer
from .rules import RuleSet
from .tensor_io import Dataset
from .tree import DecisionTree

CORRECT, INCORRECT, UNCERTAIN = "correct", "incorrect", "uncertain"
RULES, CLASSIFIERS = "rules", "classifiers"


def verdict(correct_votes: int, incorrect_votes: int) -> str:
    if correct_votes > incorrect_votes:
        return CORRECT
    if correct_votes < incorrect_votes:
        return INCORRECT
    return UNCERTAIN


@dataclass
class MonitorReport:
    mode: str
    verdicts: list
    correct_votes: np.ndarray
    incorrect_votes: np.ndarray
    n_layers: int
    elapsed_ms: float
    confusion: Optional[dict] = None
    accuracy: Optional[float] = None
    layers: list = field(default_factory=list)

    @property
    def n_inputs(self):
        return len(self.verdicts)

    def histogram(self):
        h = Counter(self.verdicts)
        return {v: h.get(v, 0) for v in (CORRECT, INCORRECT, UNCERTAIN)}

    def to_dict(self):
        return {
            "mode": self.mode,
            "n_inputs": self.n_inputs,
            "n_layers": self.n_layers,
            "layers": self.layers,
            "histogram": self.histogram(),
            "accuracy": self.accuracy,
            "confusion": self.confusion,
            "elapsed_ms": self.elapsed_ms,
            "verdicts": list(self.verdicts),
        }


def _features(net: Network, X, tap: LayerTap, acts: bool, width: int):
    if X.shape[0] == 0:
        return np.zeros((0, width))
    if tap.layer_name == INPUT_LAYER:
        v = X
    else:
        try:
            v = forward_to_layer(net, X, tap)
        except UnknownLayer as exc:
            raise LayerMismatch(str(exc)) from None
    if v.shape[1] < width:
        raise LayerMismatch(f"layer {tap} has {v.shape[1]} neurons, monitor expects {width}")
    return binarize(v) if acts else v


def _vote_label(label, where):
    if label not in (0, 1):
        raise LayerMismatch(f"{where} carries label {label}; monitoring needs correctness labels 0/1")
    return int(label)


def _finish(mode, net, D, votes, elapsed, taps):
    n = len(D)
    yes = np.array([sum(1 for v in row if v == 1) for row in votes], dtype=np.int64).reshape(n)
    no = np.array([sum(1 for v in row if v == 0) for row in votes], dtype=np.int64).reshape(n)
    verdicts = [verdict(int(a), int(b)) for a, b in zip(yes, no)]
    confusion = accuracy = None
    if D.labels is not None and n:
        actual = np.argmax(forward(net, D.inputs), axis=1) == np.asarray(D.labels).reshape(-1)
        confusion = {v: {"actual_correct": 0, "actual_incorrect": 0}
                     for v in (CORRECT, INCORRECT, UNCERTAIN)}
        for v, ok in zip(verdicts, actual):
            confusion[v]["actual_correct" if ok else "actual_incorrect"] += 1
        decided = [(v, ok) for v, ok in zip(verdicts, actual) if v != UNCERTAIN]
        if decided:
            accuracy = sum((v == CORRECT) == bool(ok) for v, ok in decided) / len(decided)
    return MonitorReport(mode, verdicts, yes, no, len(taps), elapsed * 1000.0, confusion, accuracy,
                         [str(t) for t in taps])


def monitor_rules(net: Network, rulesets, D: Dataset) -> MonitorReport:
    """Linear rule scan per layer; the first matching rule casts the layer's vote."""
    X = D.inputs
    prepared = []
    for rs in rulesets:
        rules = list(rs)
        if not rules:
            continue
        taps = {r.layer for r in rules}
        if len(taps) != 1:
            raise LayerMismatch("each rule set must speak about exactly one layer")
        tap = rules[0].layer
        acts = rules[0].acts
        width = max((max(r.neurons) + 1 for r in rules if r.terms), default=0)
        for r in rules:
            _vote_label(r.label, f"rule for {tap}")
        prepared.append((tap, rules, _features(net, X, tap, acts, width)))

    votes = [[] for _ in range(len(D))]
    start = time.perf_counter()
    for i in range(len(D)):
        row = votes[i]
        for _, rules, F in prepared:
            v = F[i]
            for r in rules:
                if r.matches(v):
                    row.append(r.label)
                    break
    elapsed = time.perf_counter() - start
    return _finish(RULES, net, D, votes, elapsed, [p[0] for p in prepared])


def _tree_tap(tree: DecisionTree) -> LayerTap:
    layer = tree.metadata.get("layer")
    if layer is None:
        raise LayerMismatch("tree metadata does not name its layer")
    return LayerTap.parse(layer)


def monitor_classifiers(net: Network, trees, D: Dataset) -> MonitorReport:
    """Each layer's tree predicts the vote directly by root-to-leaf descent."""
    X = D.inputs
    prepared = []
    for tree in trees:
        tap = _tree_tap(tree)
        for c in tree.classes:
            _vote_label(int(c), f"tree for {tap}")
        F = _features(net, X, tap, bool(tree.metadata.get("acts", False)), tree.n_features)
        prepared.append((tap, tree, F))

    votes = [[] for _ in range(len(D))]
    start = time.perf_counter()
    for i in range(len(D)):
        row = votes[i]
        for _, tree, F in prepared:
            row.append(tree.predict_one(F[i]))
    elapsed = time.perf_counter() - start
    return _finish(CLASSIFIERS, net, D, votes, elapsed, [p[0] for p in prepared])


def pure_leaf_mask(net: Network, trees, X) -> np.ndarray:
    """Rows whose descent ends in a pure leaf for every tree."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mask = np.ones(X.shape[0], dtype=bool)
    for tree in trees:
        F = _features(net, X, _tree_tap(tree), bool(tree.metadata.get("acts", False)),
                      tree.n_features)
        leaves = tree.apply(F) if len(F) else np.zeros(0, dtype=np.int64)
        mask &= np.array([tree.is_pure(int(l)) for l in leaves], dtype=bool)
    return mask
