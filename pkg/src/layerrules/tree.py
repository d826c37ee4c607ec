"""CART decision trees over activation matrices.

Splits minimise weighted Gini impurity over candidate thresholds placed at
midpoints between consecutive distinct feature values. Samples with
``feature <= threshold`` go left. Ties between candidate splits are broken
by impurity, then feature index, then threshold, so fitting is fully
deterministic; the seed is only recorded as provenance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyDataset, SchemaViolation, DimensionMismatch

LEAF = -1
_TIE_EPS = 1e-12


@dataclass(eq=False)
class DecisionTree:
    feature: np.ndarray  # int, LEAF for leaves
    threshold: np.ndarray  # float64, nan for leaves
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # n_nodes x n_classes raw sample counts
    classes: np.ndarray  # label value of each count column
    n_features: int
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def leaves(self):
        return np.flatnonzero(self.feature == LEAF)

    def is_pure(self, node: int) -> bool:
        return np.count_nonzero(self.counts[node]) == 1

    def leaf_label(self, node: int) -> int:
        """Majority class of a leaf; ties go to the lowest label."""
        return int(self.classes[int(np.argmax(self.counts[node]))])

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] < self.n_features:
            raise DimensionMismatch(f"tree expects {self.n_features} features, got {X.shape[1]}")
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        leaves = self.apply(X)
        return self.classes[np.argmax(self.counts[leaves], axis=1)]

    def predict_one(self, v) -> int:
        node = 0
        feature, threshold = self.feature, self.threshold
        while feature[node] != LEAF:
            node = self.left[node] if v[feature[node]] <= threshold[node] else self.right[node]
        return int(self.classes[int(np.argmax(self.counts[node]))])

    def structure(self):
        """Hashable summary used to compare trees."""
        return (tuple(self.feature.tolist()), tuple(np.nan_to_num(self.threshold, nan=0.0).tolist()),
                tuple(self.left.tolist()), tuple(self.right.tolist()),
                tuple(map(tuple, self.counts.tolist())), tuple(self.classes.tolist()))

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        return (self.structure() == other.structure() and self.n_features == other.n_features
                and self.seed == other.seed and self.metadata == other.metadata)

    # --- serialization -------------------------------------------------

    def to_dict(self):
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] == LEAF:
                nodes.append({"id": i, "counts": [int(c) for c in self.counts[i]]})
            else:
                nodes.append({"id": i, "feature": int(self.feature[i]),
                              "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i])})
        return {"format": "layerrules-tree", "version": 1, "n_features": self.n_features,
                "classes": [int(c) for c in self.classes], "seed": self.seed,
                "metadata": self.metadata, "nodes": nodes}

    @classmethod
    def from_dict(cls, doc) -> "DecisionTree":
        try:
            if doc.get("format") != "layerrules-tree":
                raise SchemaViolation("not a tree document")
            classes = np.asarray(doc["classes"], dtype=np.int64)
            nodes = doc["nodes"]
            n = len(nodes)
            feature = np.full(n, LEAF, dtype=np.int64)
            threshold = np.full(n, np.nan)
            left = np.full(n, LEAF, dtype=np.int64)
            right = np.full(n, LEAF, dtype=np.int64)
            counts = np.zeros((n, classes.size), dtype=np.int64)
            for pos, node in enumerate(nodes):
                if node["id"] != pos:
                    raise SchemaViolation("node ids must be 0..n-1 in order")
                if "counts" in node:
                    c = np.asarray(node["counts"], dtype=np.int64)
                    if c.shape != (classes.size,) or c.sum() < 1 or (c < 0).any():
                        raise SchemaViolation(f"bad leaf counts at node {pos}")
                    counts[pos] = c
                else:
                    feature[pos] = int(node["feature"])
                    threshold[pos] = float(node["threshold"])
                    left[pos], right[pos] = int(node["left"]), int(node["right"])
                    if not (pos < left[pos] < n and pos < right[pos] < n):
                        raise SchemaViolation(f"bad child index at node {pos}")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaViolation):
                raise
            raise SchemaViolation(f"malformed tree document: {exc!r}") from None
        # children come after parents, so a reverse sweep fills internal counts
        for pos in range(n - 1, -1, -1):
            if feature[pos] != LEAF:
                counts[pos] = counts[left[pos]] + counts[right[pos]]
        return cls(feature, threshold, left, right, counts, classes, int(doc["n_features"]),
                   int(doc.get("seed", 0)), dict(doc.get("metadata", {})))


def serialize_tree(tree: DecisionTree, path) -> None:
    with open(path, "w") as fh:
        json.dump(tree.to_dict(), fh, indent=1)


def deserialize_tree(path) -> DecisionTree:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"{path}: {exc}") from None
    return DecisionTree.from_dict(doc)


def _gini(counts, totals):
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / totals[..., None]
        g = 1.0 - np.sum(p * p, axis=-1)
    return np.where(totals > 0, g, 0.0)


def _best_split(X, yk, w, K):
    """Best (feature, threshold, impurity) for the samples of one node, or None."""
    n, F = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)  # n x F
    valid = xs[1:] > xs[:-1]  # (n-1) x F, cut after position i
    if not valid.any():
        return None
    onehot = np.zeros((n, K))
    onehot[np.arange(n), yk] = w
    cum = np.cumsum(onehot[order], axis=0)  # n x F x K
    total = cum[-1, 0]
    left = cum[:-1]  # (n-1) x F x K
    right = total - left
    wl = left.sum(axis=-1)
    wr = right.sum(axis=-1)
    wt = total.sum()
    imp = (wl * _gini(left, wl) + wr * _gini(right, wr)) / wt
    imp = np.where(valid, imp, np.inf)
    best = imp.min()
    # lowest feature, then lowest threshold, among near-equal impurities
    cand = np.argwhere(imp <= best + _TIE_EPS * max(1.0, abs(best)))
    pos, f = min(((int(i), int(j)) for i, j in cand), key=lambda t: (t[1], t[0]))
    a, b = xs[pos, f], xs[pos + 1, f]
    thr = a / 2.0 + b / 2.0
    if not (a <= thr < b):
        thr = a
    return f, float(thr), float(imp[pos, f])


def fit_tree(A, L, weights=None, seed: int = 0, max_depth: Optional[int] = None,
             metadata: Optional[dict] = None) -> DecisionTree:
    """Grow a CART classification tree on features ``A`` and labels ``L``.

    Growth stops when a node is pure, reaches ``max_depth`` or has no feature
    with two distinct values. Zero-gain splits are accepted, as in the usual
    CART default, so XOR-like patterns are still separated.
    """
    X = np.asarray(A, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(L).reshape(-1)
    if X.shape[0] == 0:
        raise EmptyDataset("cannot fit a tree on zero samples")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{y.shape[0]} labels for {X.shape[0]} rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix must be finite")
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    classes, yk = np.unique(y, return_inverse=True)
    K = classes.size

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(np.nan)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(np.bincount(yk[idx], minlength=K))
        return len(feature) - 1

    # entries are (parent, side, sample indices, depth); nodes are numbered
    # when popped, which yields pre-order with the left subtree first
    stack = [(-1, 0, np.arange(X.shape[0]), 0)]
    while stack:
        parent, side, idx, depth = stack.pop()
        node = new_node(idx)
        if parent >= 0:
            (left if side == 0 else right)[parent] = node
        if np.count_nonzero(counts[node]) <= 1 or idx.size < 2:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        split = _best_split(X[idx], yk[idx], w[idx], K)
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        stack.append((node, 1, idx[~mask], depth + 1))
        stack.append((node, 0, idx[mask], depth + 1))

    return _finish(feature, threshold, left, right, counts, classes, X.shape[1], seed, metadata)


def _finish(feature, threshold, left, right, counts, classes, n_features, seed, metadata):
    return DecisionTree(np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=np.float64),
                        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
                        np.asarray(counts, dtype=np.int64), classes.astype(np.int64), n_features,
                        int(seed), dict(metadata or {}))
