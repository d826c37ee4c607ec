"""Proving rules: support boxes, output properties and the refinement loop.

A rule ``sigma`` at layer ``l`` with label ``c`` is checked against an output
property over the region spanned by the training inputs that satisfy it.
The region is refined in three fixed steps (support boxes; layer pinned to
one support point's activation; input pinned to that point as well) until
every adversary label has an UNSAT answer. The last step is a point query
on an input that satisfies the property, so the loop always terminates.
"""
from __future__ import annotations

import base64
import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (AnchorViolatesProperty, EmptySupport, RuleUnsatisfiedAtInput, SchemaViolation,
                     UnknownOperator, DimensionMismatch)
from .extraction import binarize
from .network import LayerTap, Network, forward, forward_to_layer, truncate
from .rules import GT, LE, Rule
from .tensor_io import npy_bytes
from .verifier import (SAT, TIMEOUT, UNSAT, BoxRegion, Budget, LinearPredicate, beats,
                       solve_query)

PROVED, COUNTEREXAMPLE = "proved", "counterexample"
N_ITERATIONS = 3


@dataclass(frozen=True)
class AnchorPoint:
    x0: np.ndarray
    v0: np.ndarray


@dataclass(frozen=True)
class ConstraintRow:
    node: int
    op: str  # "MIN" | "MAX"
    slack: float
    bound: float

    def violation(self, n_out: int, row_id) -> LinearPredicate:
        coeffs = np.zeros(n_out)
        if self.op == "MIN":
            coeffs[self.node] = -1.0
            return LinearPredicate(coeffs, self.bound, True, row_id)
        coeffs[self.node] = 1.0
        return LinearPredicate(coeffs, -self.bound, True, row_id)


@dataclass(frozen=True)
class OutputProperty:
    """Post-condition on the logits.

    ``argmax``: output ``label`` is strictly the largest. ``argmin``: it is
    strictly the smallest. ``bounds``: every constraint row holds.
    """

    kind: str
    label: int = 0
    rows: tuple = ()

    @classmethod
    def argmax(cls, c):
        return cls("argmax", int(c))

    @classmethod
    def argmin(cls, c):
        return cls("argmin", int(c))

    @classmethod
    def bounds(cls, rows, label=0):
        return cls("bounds", int(label), tuple(rows))

    def targets(self, n_out: int):
        """Initial set of things to refute: adversary labels or row ids."""
        if self.kind == "bounds":
            return list(range(len(self.rows)))
        if not 0 <= self.label < n_out:
            raise DimensionMismatch(f"label {self.label} outside {n_out} outputs")
        return [c for c in range(n_out) if c != self.label]

    def violation(self, target, n_out: int) -> LinearPredicate:
        if self.kind == "bounds":
            return self.rows[target].violation(n_out, target)
        return beats(self.label, target, n_out, self.kind)

    def holds(self, y) -> bool:
        n_out = len(y)
        return not any(self.violation(t, n_out).holds(y) for t in self.targets(n_out))

    def to_dict(self):
        d = {"kind": self.kind, "label": self.label}
        if self.rows:
            d["rows"] = [{"node": r.node, "op": r.op, "slack": r.slack, "bound": r.bound}
                         for r in self.rows]
        return d


def parse_constraints_file(path, support_outputs) -> OutputProperty:
    """Read ``[node,MIN|MAX,slack]`` rows and resolve them against support outputs."""
    outs = np.atleast_2d(np.asarray(support_outputs, dtype=np.float64))
    rows = []
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            line = line.strip("[]")
            parts = next(csv.reader([line]))
            if len(parts) != 3:
                raise SchemaViolation(f"{path}:{lineno}: expected node,operator,value")
            try:
                node = int(parts[0].strip().strip("[]"))
                slack = float(parts[2].strip().strip("[]"))
            except ValueError:
                raise SchemaViolation(f"{path}:{lineno}: bad number in {raw.strip()!r}") from None
            op = parts[1].strip().upper()
            if op not in ("MIN", "MAX"):
                raise UnknownOperator(f"{path}:{lineno}: unknown operator {parts[1].strip()!r}")
            if slack < 0 or not np.isfinite(slack):
                raise SchemaViolation(f"{path}:{lineno}: slack must be a non-negative number")
            if not 0 <= node < outs.shape[1]:
                raise SchemaViolation(f"{path}:{lineno}: output node {node} out of range")
            col = outs[:, node]
            bound = col.min() - slack if op == "MIN" else col.max() + slack
            rows.append(ConstraintRow(node, op, slack, float(bound)))
    return OutputProperty.bounds(rows)


def sigma_holds(rule: Rule, v) -> bool:
    """Rule check on raw layer values (on/off rules read ``v > 0``)."""
    feats = binarize(v) if rule.acts else np.asarray(v)
    return rule.matches(feats)


def support_mask(net: Network, rule: Rule, X) -> np.ndarray:
    V = forward_to_layer(net, X, rule.layer)
    return rule.match_matrix(binarize(V) if rule.acts else V)


def compute_boxes(net: Network, X_sup, tap: LayerTap):
    """Input and layer hulls of the support set, plus its first point as anchor."""
    X = np.atleast_2d(np.asarray(X_sup, dtype=np.float64))
    if X.shape[0] == 0:
        raise EmptySupport("the rule is satisfied by no input")
    V = forward_to_layer(net, X, tap)
    box = BoxRegion(X.min(axis=0), X.max(axis=0), V.min(axis=0), V.max(axis=0), tap)
    x0 = X[0].copy()
    return box, AnchorPoint(x0, forward_to_layer(net, x0, tap))


def iteration_region(it: int, box: BoxRegion, anchor: AnchorPoint) -> BoxRegion:
    if it == 0:
        return box
    if it == 1:
        return BoxRegion(box.input_lo, box.input_hi, anchor.v0, anchor.v0, box.tap)
    return BoxRegion(anchor.x0, anchor.x0, anchor.v0, anchor.v0, box.tap)


@dataclass
class QueryRecord:
    target: int
    verdict: str
    time: float
    nodes: int


@dataclass
class IterationRecord:
    iteration: int
    labs_before: list
    queries: list = field(default_factory=list)


@dataclass
class Counterexample:
    iteration: int
    target: int
    x: np.ndarray
    outputs: np.ndarray


@dataclass
class VerifyOutcome:
    status: str  # proved | counterexample | timeout
    remaining: list
    proved_at: Optional[int] = None
    iterations: list = field(default_factory=list)
    counterexamples: list = field(default_factory=list)
    region: Optional[BoxRegion] = None
    n_queries: int = 0

    @property
    def proved(self):
        return self.status == PROVED


def prove_rule(net: Network, rule: Rule, prop: OutputProperty, X_train, budget: Budget = Budget(),
               workers: int = 1) -> VerifyOutcome:
    """Run the three-step refinement for ``rule`` against ``prop``.

    In each step every remaining target gets one negated query; UNSAT drops
    it, while the first SAT or TIMEOUT ends the step. The outcome lists the
    targets still open, every counterexample found on the way, and the step
    at which the proof completed.
    """
    X = np.atleast_2d(np.asarray(X_train.inputs if hasattr(X_train, "inputs") else X_train,
                                 dtype=np.float64))
    if X.shape[0] == 0:
        raise EmptySupport("no training inputs")
    X_sup = X[support_mask(net, rule, X)]
    box, anchor = compute_boxes(net, X_sup, rule.layer)
    n_out = net.output_dim
    y0 = forward(net, anchor.x0)
    if not prop.holds(y0):
        raise AnchorViolatesProperty(
            f"anchor input does not satisfy the {prop.kind} property for label {prop.label}")

    labs = prop.targets(n_out)
    out = VerifyOutcome(TIMEOUT, list(labs))
    last_failure = None
    for it in range(N_ITERATIONS):
        region = iteration_region(it, box, anchor)
        rec = IterationRecord(it, list(labs))
        for target in list(labs):
            res = solve_query(net, region, rule, prop.violation(target, n_out), budget, workers)
            out.n_queries += 1
            rec.queries.append(QueryRecord(target, res.status, res.elapsed, res.nodes))
            if res.status == UNSAT:
                labs.remove(target)
                continue
            last_failure = res.status
            if res.status == SAT:
                out.counterexamples.append(Counterexample(it, target, res.x, forward(net, res.x)))
            break
        out.iterations.append(rec)
        if not labs:
            out.status, out.proved_at, out.region = PROVED, it, region
            break
    out.remaining = list(labs)
    if labs:
        out.status = COUNTEREXAMPLE if last_failure == SAT else TIMEOUT
    return out


def region_coverage(net: Network, region: BoxRegion, X) -> float:
    """Fraction of rows of ``X`` lying inside the region's input and layer boxes."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        return 0.0
    inside = np.all((X >= region.input_lo) & (X <= region.input_hi), axis=1)
    if region.layer_lo is not None:
        V = forward_to_layer(net, X, region.tap)
        inside &= np.all((V >= region.layer_lo) & (V <= region.layer_hi), axis=1)
    return float(inside.mean())


def _b64_npy(x) -> str:
    return base64.b64encode(npy_bytes(np.asarray(x, dtype=np.float64))).decode("ascii")


def outcome_report(rule: Rule, prop: OutputProperty, outcome: VerifyOutcome, rule_id=None,
                   coverage: Optional[float] = None) -> dict:
    """JSON-ready proof report; vectors are base64-encoded NPY documents."""
    return {
        "rule": {"id": rule_id, "layer": str(rule.layer), "neurons": rule.neurons,
                 "signature": rule.signature(), "support": rule.support, "label": rule.label},
        "property": prop.to_dict(),
        "iterations": [
            {"iteration": r.iteration, "labs_before": r.labs_before,
             "queries": {str(q.target): {"verdict": q.verdict, "time": q.time, "nodes": q.nodes}
                         for q in r.queries}}
            for r in outcome.iterations
        ],
        "outcome": outcome.status,
        "proved_at_iteration": outcome.proved_at,
        "remaining_labs": outcome.remaining,
        "n_queries": outcome.n_queries,
        "counterexamples": [
            {"iteration": c.iteration, "label": c.target, "x_npy": _b64_npy(c.x),
             "outputs_npy": _b64_npy(c.outputs)}
            for c in outcome.counterexamples
        ],
        "coverage": coverage,
    }


# --- compositional checks and explanations ----------------------------------

@dataclass
class ImplicationResult:
    status: str  # proved | counterexample | timeout
    x: Optional[np.ndarray] = None
    term: Optional[int] = None
    calls: int = 0

    @property
    def proved(self):
        return self.status == PROVED


def negated_term(n: int, op: str, t: float, width: int) -> LinearPredicate:
    coeffs = np.zeros(width)
    if op == LE:  # not (v <= t)  is  v - t > 0
        coeffs[n] = 1.0
        return LinearPredicate(coeffs, -t, True, n)
    coeffs[n] = -1.0  # not (v > t)  is  t - v >= 0
    return LinearPredicate(coeffs, t, False, n)


def prove_pattern_implication(net: Network, tap: LayerTap, lo, hi, sigma: Rule,
                              budget: Budget = Budget()) -> ImplicationResult:
    """Prove that every input in [lo, hi] drives layer ``tap`` into ``sigma``.

    Works on the network truncated at ``tap``; each term of sigma is negated
    and refuted by its own query.
    """
    terms = sigma.value_terms()
    if not terms:
        return ImplicationResult(PROVED)
    sub = truncate(net, tap)
    box = BoxRegion(lo, hi)
    width = sub.output_dim
    calls = 0
    timed_out = False
    for i, (n, op, t) in enumerate(terms):
        res = solve_query(sub, box, None, negated_term(n, op, t, width), budget)
        calls += 1
        if res.status == SAT:
            return ImplicationResult(COUNTEREXAMPLE, res.x, i, calls)
        if res.status == TIMEOUT:
            timed_out = True
    return ImplicationResult(TIMEOUT if timed_out else PROVED, None, None, calls)


def minimize_explanation(net: Network, x, sigma: Rule, tap: LayerTap, domain_lo, domain_hi,
                         budget: Budget = Budget()) -> list:
    """Greedy subset of input coordinates that, fixed at ``x``, still imply sigma.

    Coordinates are tried in ascending order; freeing one widens it to
    ``[domain_lo[i], domain_hi[i]]`` and is kept only when the implication
    still proves. Returns the sorted list of coordinates left fixed.
    """
    x = np.asarray(x, dtype=np.float64)
    if not sigma_holds(sigma, forward_to_layer(net, x, tap)):
        raise RuleUnsatisfiedAtInput("sigma does not hold at the given input")
    dlo = np.asarray(domain_lo, dtype=np.float64)
    dhi = np.asarray(domain_hi, dtype=np.float64)
    fixed = set(range(x.size))
    for i in range(x.size):
        trial = fixed - {i}
        lo = np.array([x[j] if j in trial else min(dlo[j], x[j]) for j in range(x.size)])
        hi = np.array([x[j] if j in trial else max(dhi[j], x[j]) for j in range(x.size)])
        if prove_pattern_implication(net, tap, lo, hi, sigma, budget).proved:
            fixed = trial
    return sorted(fixed)
