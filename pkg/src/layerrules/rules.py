"""Rules extracted from pure tree leaves, their metrics and CSV storage.

A rule is a conjunction of per-neuron threshold terms at one layer together
with the label every training sample on that path carried. In on/off mode
the features are 0/1 indicators and each term is rendered as ``1`` (on) or
``0`` (off).
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, IoFailure, NoRulesForLabel, SchemaViolation
from .network import LayerTap
from .tree import LEAF, DecisionTree

LE, GT = "<=", ">"
CSV_COLUMNS = ["layer", "neurons", "signature", "support", "label",
               "train_precision", "train_recall", "train_f1",
               "test_precision", "test_recall", "test_f1"]
RULESET_FILE = "ruleset.csv"


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    coverage: float
    empty_match: bool = False
    no_positives: bool = False


@dataclass(frozen=True)
class Rule:
    layer: LayerTap
    terms: tuple  # ((neuron, op, threshold), ...)
    support: int
    label: int
    acts: bool = False
    train: Optional[Metrics] = field(default=None, compare=False)
    test: Optional[Metrics] = field(default=None, compare=False)

    def __post_init__(self):
        terms = tuple((int(n), op, float(t)) for n, op, t in self.terms)
        seen = set()
        for n, op, _ in terms:
            if op not in (LE, GT):
                raise ValueError(f"unknown operator {op!r}")
            if (n, op) in seen:
                raise ValueError(f"duplicate {op} term on neuron {n}")
            seen.add((n, op))
        if self.support < 1:
            raise ValueError("rule support must be at least 1")
        object.__setattr__(self, "terms", terms)

    @property
    def neurons(self):
        return [n for n, _, _ in self.terms]

    def signature(self):
        if self.acts:
            return [1 if op == GT else 0 for _, op, _ in self.terms]
        return [f"{op}{t!r}" for _, op, t in self.terms]

    def value_terms(self):
        """Terms over raw neuron values: on means > 0 and off means <= 0."""
        if not self.acts:
            return self.terms
        return tuple((n, op, 0.0) for n, op, _ in self.terms)

    def matches(self, v) -> bool:
        return rule_matches(self, v)

    def match_matrix(self, A) -> np.ndarray:
        A = np.asarray(A)
        mask = np.ones(A.shape[0], dtype=bool)
        if self.terms and A.shape[1] <= max(self.neurons):
            raise DimensionMismatch("activation rows shorter than the rule's neuron indices")
        for n, op, t in self.terms:
            mask &= (A[:, n] <= t) if op == LE else (A[:, n] > t)
        return mask

    def with_metrics(self, train=None, test=None) -> "Rule":
        return Rule(self.layer, self.terms, self.support, self.label, self.acts,
                    train if train is not None else self.train,
                    test if test is not None else self.test)

    def describe(self):
        if self.acts:
            parts = [f"{'on' if op == GT else 'off'}(N{n})" for n, op, _ in self.terms]
        else:
            parts = [f"N{n} {op} {t:g}" for n, op, t in self.terms]
        return f"[{self.layer}] {' and '.join(parts) or 'true'} => {self.label} (support {self.support})"


def rule_matches(rule: Rule, v) -> bool:
    """Whether the activation vector ``v`` satisfies every term of ``rule``."""
    if rule.terms and len(v) <= max(rule.neurons):
        raise DimensionMismatch(f"vector of length {len(v)} too short for rule")
    for n, op, t in rule.terms:
        x = v[n]
        if op == LE:
            if not x <= t:
                return False
        elif not x > t:
            return False
    return True


@dataclass
class RuleSet:
    rules: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def by_label(self) -> dict:
        out = {}
        for r in self.rules:
            out.setdefault(r.label, []).append(r)
        return out

    def labels(self):
        return sorted({r.label for r in self.rules})

    def for_layer(self, layer: LayerTap) -> "RuleSet":
        return RuleSet([r for r in self.rules if r.layer == layer], dict(self.provenance))

    def layers(self):
        seen = []
        for r in self.rules:
            if r.layer not in seen:
                seen.append(r.layer)
        return seen

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __eq__(self, other):
        if not isinstance(other, RuleSet):
            return NotImplemented
        return self.rules == other.rules


def extract_rules(tree: DecisionTree, layer: Optional[LayerTap] = None,
                  acts: Optional[bool] = None) -> RuleSet:
    """One rule per pure leaf, in pre-order of the leaves.

    Repeated bounds on one neuron along a path are merged, keeping the
    tightest ``<=`` and the tightest ``>``.
    """
    if layer is None:
        layer = LayerTap.parse(tree.metadata.get("layer", "inputs"))
    if acts is None:
        acts = bool(tree.metadata.get("acts", False))
    rules = []
    # (node, terms so far) with terms as an ordered dict keyed by (neuron, op)
    stack = [(0, {})]
    while stack:
        node, terms = stack.pop()
        f = tree.feature[node]
        if f == LEAF:
            if tree.is_pure(node):
                label = int(tree.classes[int(np.flatnonzero(tree.counts[node])[0])])
                support = int(tree.counts[node].sum())
                rules.append(Rule(layer, tuple((n, op, t) for (n, op), t in terms.items()),
                                  support, label, acts))
            continue
        t = float(tree.threshold[node])
        lt = dict(terms)
        lt[(f, LE)] = min(t, lt.get((f, LE), math.inf))
        rt = dict(terms)
        rt[(f, GT)] = max(t, rt.get((f, GT), -math.inf))
        stack.append((int(tree.right[node]), rt))
        stack.append((int(tree.left[node]), lt))
    return RuleSet(rules, dict(tree.metadata))


def evaluate_rule(rule: Rule, A, L) -> Metrics:
    """Precision, recall, F1 and coverage (all percent) of ``rule`` on (A, L)."""
    rows = A.rows if hasattr(A, "rows") else np.asarray(A)
    L = np.asarray(L).reshape(-1)
    if rows.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"{rows.shape[0]} activation rows for {L.shape[0]} labels")
    n = L.shape[0]
    if n == 0:
        return Metrics(0.0, 0.0, 0.0, 0.0, empty_match=True, no_positives=True)
    matched = rule.match_matrix(rows)
    m = int(matched.sum())
    positives = int((L == rule.label).sum())
    hits = int((matched & (L == rule.label)).sum())
    precision = 100.0 * hits / m if m else 0.0
    recall = 100.0 * hits / positives if positives else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Metrics(precision, recall, f1, 100.0 * m / n, empty_match=m == 0,
                   no_positives=positives == 0)


def select_max_support(rs: RuleSet, label: int) -> Rule:
    """Highest-support rule for ``label``; the earliest wins ties."""
    best = None
    for r in rs.rules:
        if r.label == label and (best is None or r.support > best.support):
            best = r
    if best is None:
        raise NoRulesForLabel(f"no rules for label {label}")
    return best


def top_rules(rs: RuleSet) -> RuleSet:
    """Keep, per label, the rule with the highest train recall.

    Ties go to higher support, then to extraction order.
    """
    best = {}
    for pos, r in enumerate(rs.rules):
        recall = r.train.recall if r.train is not None else 0.0
        key = (recall, r.support, -pos)
        if r.label not in best or key > best[r.label][0]:
            best[r.label] = (key, r)
    keep = {id(v[1]) for v in best.values()}
    return RuleSet([r for r in rs.rules if id(r) in keep], dict(rs.provenance))


# --- CSV ---------------------------------------------------------------

def _fmt(x):
    return "" if x is None else repr(float(x))


def _rule_row(r: Rule):
    neurons = "[" + ",".join(str(n) for n in r.neurons) + "]"
    if r.acts:
        sig = "[" + ",".join(str(s) for s in r.signature()) + "]"
    else:
        sig = "[" + ", ".join(r.signature()) + "]"
    tr, te = r.train, r.test
    return [str(r.layer), neurons, sig, str(r.support), str(r.label),
            _fmt(tr and tr.precision), _fmt(tr and tr.recall), _fmt(tr and tr.f1),
            _fmt(te and te.precision), _fmt(te and te.recall), _fmt(te and te.f1)]


def ruleset_to_csv(rs: RuleSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rs.rules:
        w.writerow(_rule_row(r))
    return buf.getvalue()


def _split_list(text):
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise SchemaViolation(f"expected a bracketed list, got {text!r}")
    inner = text[1:-1].strip()
    return [p.strip() for p in inner.split(",")] if inner else []


def _parse_metrics(p, r, f):
    vals = [p, r, f]
    if all(v == "" for v in vals):
        return None
    try:
        p, r, f = (float(v) for v in vals)
    except ValueError:
        raise SchemaViolation(f"bad metric values {vals!r}") from None
    return Metrics(p, r, f, math.nan)


def _rule_from_row(row) -> Rule:
    if len(row) != len(CSV_COLUMNS):
        raise SchemaViolation(f"expected {len(CSV_COLUMNS)} columns, got {len(row)}")
    layer, neurons, sig = row[0], _split_list(row[1]), _split_list(row[2])
    if len(neurons) != len(sig):
        raise SchemaViolation("neurons and signature differ in length")
    try:
        neurons = [int(n) for n in neurons]
        acts = bool(sig) and all(s in ("0", "1") for s in sig)
        terms = []
        for n, s in zip(neurons, sig):
            if acts:
                terms.append((n, GT if s == "1" else LE, 0.5))
            elif s.startswith(LE):
                terms.append((n, LE, float(s[2:])))
            elif s.startswith(GT):
                terms.append((n, GT, float(s[1:])))
            else:
                raise SchemaViolation(f"bad signature term {s!r}")
        rule = Rule(LayerTap.parse(layer), tuple(terms), int(row[3]), int(row[4]), acts,
                    _parse_metrics(*row[5:8]), _parse_metrics(*row[8:11]))
    except ValueError as exc:
        if isinstance(exc, SchemaViolation):
            raise
        raise SchemaViolation(f"bad rule row {row!r}: {exc}") from None
    return rule


def ruleset_from_csv(text: str) -> RuleSet:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_COLUMNS:
        raise SchemaViolation("ruleset CSV header does not match the expected columns")
    return RuleSet([_rule_from_row(row) for row in rows[1:] if row])


def serialize_ruleset(rs: RuleSet, directory) -> str:
    path = os.path.join(directory, RULESET_FILE)
    try:
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(ruleset_to_csv(rs))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return path


def deserialize_ruleset(directory) -> RuleSet:
    path = os.path.join(directory, RULESET_FILE)
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return ruleset_from_csv(text)
