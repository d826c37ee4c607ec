import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerrules.errors import EmptyDataset, SchemaViolation
from layerrules.tree import LEAF, DecisionTree, deserialize_tree, fit_tree, serialize_tree


def gini_of_split(x, y, t):
    # plain weighted Gini, computed independently of the tree module
    total = 0.0
    for side in (y[x <= t], y[x > t]):
        if side.size == 0:
            return np.inf
        _, c = np.unique(side, return_counts=True)
        p = c / side.size
        total += side.size * (1 - (p ** 2).sum())
    return total / y.size


def brute_root(X, y):
    best = np.inf
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            best = min(best, gini_of_split(X[:, f], y, (a + b) / 2))
    return best


def test_single_class_is_leaf():
    t = fit_tree(np.random.default_rng(0).normal(size=(8, 3)), np.full(8, 4))
    assert t.n_nodes == 1 and t.is_pure(0) and t.leaf_label(0) == 4


def test_simple_split():
    t = fit_tree([[0], [0], [1], [1]], [0, 0, 1, 1])
    assert t.feature.tolist() == [0, LEAF, LEAF]
    assert t.threshold[0] == 0.5
    assert t.is_pure(1) and t.is_pure(2)
    # the brute-force oracle agrees that 0.5 is the only zero-impurity cut
    assert gini_of_split(np.array([0, 0, 1, 1.0]), np.array([0, 0, 1, 1]), 0.5) == 0.0


def test_xor_fully_separated():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    t = fit_tree(X, [0, 1, 1, 0])
    assert all(t.is_pure(l) for l in t.leaves())
    assert t.predict(X).tolist() == [0, 1, 1, 0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_root_split_is_gini_optimal(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 5, size=(30, 3)).astype(float)
    y = rng.integers(0, 3, size=30)
    t = fit_tree(X, y, max_depth=1)
    if t.n_nodes == 1:
        assert len(np.unique(y)) == 1 or all(len(np.unique(c)) == 1 for c in X.T)
        return
    got = gini_of_split(X[:, t.feature[0]], y, t.threshold[0])
    assert got == pytest.approx(brute_root(X, y), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_training_points_reach_consistent_leaves(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 4))
    y = rng.integers(0, 3, size=60)
    t = fit_tree(X, y)
    leaves = t.apply(X)
    for leaf in np.unique(leaves):
        k = np.searchsorted(t.classes, y[leaves == leaf])
        np.testing.assert_array_equal(np.bincount(k, minlength=t.classes.size), t.counts[leaf])
    # distinct rows can always be separated
    assert (t.predict(X) == y).all()


def test_deterministic():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(100, 5)), rng.integers(0, 4, size=100)
    assert fit_tree(X, y, seed=3) == fit_tree(X, y, seed=3)


def test_weights_change_majority():
    X = np.zeros((3, 1))
    assert fit_tree(X, [0, 0, 1]).predict([[0.0]]).tolist() == [0]
    assert fit_tree(X, [0, 0, 1], weights=[1, 1, 5]).n_nodes == 1


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        fit_tree(np.zeros((0, 2)), [])


def test_stump_json(tmp_path):
    t = fit_tree([[0], [1]], [0, 1], seed=11, metadata={"layer": "dense_0", "acts": False})
    doc = t.to_dict()
    assert len(doc["nodes"]) == 3 and doc["seed"] == 11
    serialize_tree(t, tmp_path / "t.json")
    back = deserialize_tree(tmp_path / "t.json")
    assert back == t and back.seed == 11 and back.metadata["layer"] == "dense_0"


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_predicts_identically(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(80, 4)), rng.integers(0, 3, size=80)
    t = fit_tree(X, y, seed=seed % 100, max_depth=int(rng.integers(1, 6)))
    back = DecisionTree.from_dict(json.loads(json.dumps(t.to_dict())))
    assert back == t
    V = rng.normal(size=(1000, 4))
    np.testing.assert_array_equal(back.predict(V), t.predict(V))


def test_bad_documents():
    with pytest.raises(SchemaViolation):
        DecisionTree.from_dict({"format": "other"})
    doc = fit_tree([[0], [1]], [0, 1]).to_dict()
    doc["nodes"][0]["left"] = 0
    with pytest.raises(SchemaViolation):
        DecisionTree.from_dict(doc)
