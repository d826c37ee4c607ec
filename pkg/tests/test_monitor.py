import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerrules.errors import LayerMismatch
from layerrules.extraction import PostCondition, binarize, label_dataset
from layerrules.monitor import (CORRECT, INCORRECT, UNCERTAIN, monitor_classifiers, monitor_rules,
                                pure_leaf_mask, verdict)
from layerrules.network import LayerTap, Network, forward_to_layer
from layerrules.rules import GT, LE, Rule, RuleSet, extract_rules
from layerrules.tensor_io import Dataset
from layerrules.tree import fit_tree
from oracles import random_network


def test_verdict_examples():
    assert verdict(3, 1) == CORRECT
    assert verdict(2, 2) == UNCERTAIN
    assert verdict(0, 0) == UNCERTAIN
    assert verdict(0, 1) == INCORRECT


@given(st.integers(0, 50), st.integers(0, 50))
def test_verdict_function(a, b):
    v = verdict(a, b)
    assert (v == CORRECT) == (a > b) and (v == INCORRECT) == (a < b) and (v == UNCERTAIN) == (a == b)


def identity_net():
    return Network.from_arrays([np.eye(2), np.eye(2)], [np.zeros(2)] * 2, ["linear", "linear"])


def test_no_match_is_uncertain():
    tap = LayerTap("dense_0")
    rs = RuleSet([Rule(tap, ((0, GT, 10.0),), 1, 1)])
    rep = monitor_rules(identity_net(), [rs], Dataset(np.zeros((3, 2))))
    assert rep.verdicts == [UNCERTAIN] * 3 and rep.n_inputs == 3


def test_rule_votes_across_layers():
    net = identity_net()
    a = RuleSet([Rule(LayerTap("dense_0"), ((0, GT, 0.0),), 1, 1)])
    b = RuleSet([Rule(LayerTap("dense_1"), ((1, GT, 0.0),), 1, 0)])
    X = np.array([[1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    rep = monitor_rules(net, [a, b], Dataset(X))
    assert rep.verdicts == [CORRECT, UNCERTAIN, INCORRECT]
    assert rep.correct_votes.tolist() == [1, 1, 0]


def test_single_tree_predicts_correct():
    t = fit_tree([[0.0], [1.0]], [1, 1], metadata={"layer": "dense_0", "acts": False})
    net = Network.from_arrays([np.ones((1, 2))], [np.zeros(1)], ["linear"])
    rep = monitor_classifiers(net, [t], Dataset(np.zeros((1, 2))))
    assert rep.verdicts == [CORRECT]
    assert rep.to_dict()["histogram"] == {CORRECT: 1, INCORRECT: 0, UNCERTAIN: 0}


def test_layer_mismatch():
    net = identity_net()
    with pytest.raises(LayerMismatch):
        monitor_rules(net, [RuleSet([Rule(LayerTap("other"), (), 1, 1)])], Dataset(np.zeros((1, 2))))
    with pytest.raises(LayerMismatch):
        monitor_rules(net, [RuleSet([Rule(LayerTap("dense_0"), (), 1, 7)])], Dataset(np.zeros((1, 2))))
    t = fit_tree([[0.0]], [1], metadata={})
    with pytest.raises(LayerMismatch):
        monitor_classifiers(net, [t], Dataset(np.zeros((1, 2))))


def test_empty_dataset():
    rep = monitor_rules(identity_net(), [], Dataset(np.zeros((0, 2))))
    assert rep.n_inputs == 0 and rep.to_dict()["n_inputs"] == 0


def test_confusion_with_labels():
    net = identity_net()
    rs = RuleSet([Rule(LayerTap("dense_0"), ((0, GT, 0.0),), 1, 1),
                  Rule(LayerTap("dense_0"), ((0, LE, 0.0),), 1, 0)])
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    rep = monitor_rules(net, [rs], Dataset(X, np.array([0, 0])))
    assert rep.accuracy == 1.0
    assert rep.confusion[CORRECT]["actual_correct"] == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_pure_leaf_agreement(seed, acts):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n_out=3)
    X = rng.uniform(-1, 1, size=(150, net.input_dim))
    y = rng.integers(0, 3, size=150)
    L = label_dataset(net, Dataset(X, y), PostCondition(1))
    trees, rulesets = [], []
    for layer in net.layers[:-1]:
        tap = LayerTap(layer.name)
        F = forward_to_layer(net, X, tap)
        F = binarize(F) if acts else F
        t = fit_tree(F, L, max_depth=4, metadata={"layer": str(tap), "acts": acts})
        trees.append(t)
        rulesets.append(extract_rules(t, tap, acts))
    V = rng.uniform(-1, 1, size=(200, net.input_dim))
    D = Dataset(V)
    a = monitor_rules(net, rulesets, D)
    b = monitor_classifiers(net, trees, D)
    mask = pure_leaf_mask(net, trees, V)
    for i in np.flatnonzero(mask):
        assert a.verdicts[i] == b.verdicts[i]
