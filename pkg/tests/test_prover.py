import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerrules.errors import (AnchorViolatesProperty, EmptySupport, RuleUnsatisfiedAtInput,
                               SchemaViolation, UnknownOperator)
from layerrules.network import LayerTap, Network, forward, forward_to_layer
from layerrules.prover import (COUNTEREXAMPLE, PROVED, OutputProperty, compute_boxes,
                               minimize_explanation, outcome_report, parse_constraints_file,
                               prove_pattern_implication, prove_rule, region_coverage)
from layerrules.rules import GT, LE, Rule
from oracles import brute_min_max, greedy_fixing_oracle, oracle_implication, random_network

TAP0 = LayerTap("dense_0")


def fold_net():
    # y0 - y1 = |x| - 0.5: class 0 away from the origin, class 1 near it
    return Network.from_arrays([[[1.0], [-1.0]], [[1.0, 1.0], [0.0, 0.0]]],
                               [[0.0, 0.0], [-0.5, 0.0]])


def test_boxes_singleton_and_extremes():
    net = Network.from_arrays([np.eye(2), np.eye(2)], [np.zeros(2)] * 2)
    box, anchor = compute_boxes(net, [[0.5, -2.0]], TAP0)
    assert box.input_lo.tolist() == box.input_hi.tolist() == [0.5, -2.0]
    assert box.layer_lo.tolist() == box.layer_hi.tolist() == [0.5, 0.0]
    assert anchor.x0.tolist() == [0.5, -2.0]
    box, anchor = compute_boxes(net, [[0, 1], [2, -1]], TAP0)
    assert box.input_lo.tolist() == [0, -1] and box.input_hi.tolist() == [2, 1]
    assert anchor.x0.tolist() == [0, 1]
    with pytest.raises(EmptySupport):
        compute_boxes(net, np.zeros((0, 2)), TAP0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_boxes_match_scan(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    tap = LayerTap(net.layers[0].name, bool(seed % 2))
    X = rng.normal(size=(20, net.input_dim))
    box, anchor = compute_boxes(net, X, tap)
    lo, hi = brute_min_max(X)
    assert box.input_lo.tolist() == lo.tolist() and box.input_hi.tolist() == hi.tolist()
    V = [forward_to_layer(net, x, tap) for x in X]
    vlo, vhi = brute_min_max(V)
    assert box.layer_lo.tolist() == vlo.tolist() and box.layer_hi.tolist() == vhi.tolist()
    assert anchor.v0.tolist() == V[0].tolist()
    assert all(box.contains_input(x) and box.contains_layer(v) for x, v in zip(X, V))


def test_constraints_file(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("[0,MIN,0.192]\n[0,MAX,0.192]\n")
    prop = parse_constraints_file(p, [[1.0], [3.0], [2.0]])
    assert [r.bound for r in prop.rows] == [pytest.approx(1 - 0.192), pytest.approx(3.192)]
    p.write_text("0,MIN,0\n0,MAX,0\n")
    prop = parse_constraints_file(p, [[4.5]])
    assert [r.bound for r in prop.rows] == [4.5, 4.5]
    assert prop.holds([4.5]) and not prop.holds([4.6])
    p.write_text("[0,AVG,0.1]\n")
    with pytest.raises(UnknownOperator):
        parse_constraints_file(p, [[0.0]])
    for bad in ("[0,MIN]\n", "[x,MIN,1]\n", "[3,MIN,1]\n", "[0,MIN,-1]\n"):
        p.write_text(bad)
        with pytest.raises(SchemaViolation):
            parse_constraints_file(p, [[0.0]])


def test_flip_then_proved():
    net = fold_net()
    X = np.array([[-1.0], [1.0]])
    assert forward(net, [0.0]).argmax() == 1  # a flip lies between the support points
    rule = Rule(TAP0, (), 2, 0)
    out = prove_rule(net, rule, OutputProperty.argmax(0), X)
    assert out.status == PROVED and out.proved_at <= 2
    cx = out.counterexamples[0]
    assert cx.iteration == 0 and forward(net, cx.x).argmax() == 1
    assert [it.labs_before for it in out.iterations][0] == [1]
    rep = outcome_report(rule, OutputProperty.argmax(0), out, rule_id=0)
    assert rep["outcome"] == "proved" and rep["counterexamples"][0]["iteration"] == 0


def test_ten_classes_query_count():
    rng = np.random.default_rng(4)
    net = Network.from_arrays([rng.normal(size=(6, 3)), rng.normal(size=(10, 6))],
                              [rng.normal(size=6), rng.normal(size=10)])
    X = rng.normal(size=(40, 3))
    V = forward_to_layer(net, X, TAP0)
    rule = Rule(TAP0, ((0, GT if V[0, 0] > 0 else LE, 0.0),), 1, 0, acts=True)
    c = int(np.argmax(forward(net, X[0])))
    out = prove_rule(net, rule, OutputProperty.argmax(c), X)
    assert out.status == PROVED
    assert all(len(it.queries) <= 9 for it in out.iterations)
    assert out.n_queries <= 27


def test_anchor_and_support_errors():
    net = fold_net()
    with pytest.raises(AnchorViolatesProperty):
        prove_rule(net, Rule(TAP0, (), 1, 1), OutputProperty.argmax(1), [[1.0]])
    with pytest.raises(EmptySupport):
        prove_rule(net, Rule(TAP0, ((0, GT, 5.0),), 1, 0), OutputProperty.argmax(0), [[1.0]])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_labs_monotone_and_terminating(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n_out=int(rng.integers(2, 6)))
    X = rng.uniform(-1, 1, size=(25, net.input_dim))
    tap = LayerTap(net.layers[0].name)
    v = forward_to_layer(net, X[0], tap)
    n = int(rng.integers(v.size))
    rule = Rule(tap, ((n, GT if v[n] > 0 else LE, 0.0),), 1, 0, acts=True)
    c = int(np.argmax(forward(net, X[0])))
    out = prove_rule(net, rule, OutputProperty.argmax(c), X)
    assert out.status == PROVED and len(out.iterations) <= 3
    C = net.output_dim
    assert out.n_queries <= 3 * (C - 1)
    sizes = [len(it.labs_before) for it in out.iterations]
    assert sizes == sorted(sizes, reverse=True) and sizes[0] == C - 1
    for a, b in zip(out.iterations, out.iterations[1:]):
        assert set(b.labs_before) <= set(a.labs_before)


def test_argmin_property():
    net = fold_net()
    out = prove_rule(net, Rule(TAP0, (), 1, 1), OutputProperty.argmin(1), [[-1.0], [1.0]])
    # y1 = 0 < y0 = |x| - 0.5 on the support, the hull contains x = 0 where it fails
    assert out.status == PROVED and out.counterexamples


def test_coverage():
    net = fold_net()
    out = prove_rule(net, Rule(TAP0, (), 1, 0), OutputProperty.argmax(0), [[-1.0], [1.0]])
    cov = region_coverage(net, out.region, [[-1.0], [0.0], [1.0], [5.0]])
    assert cov == 0.25


def test_implication_examples():
    net = Network.from_arrays([np.eye(1)], [np.zeros(1)], ["linear"])
    assert prove_pattern_implication(net, TAP0, [0], [1], Rule(TAP0, (), 1, 0)).calls == 0
    r = prove_pattern_implication(net, TAP0, [0], [1], Rule(TAP0, ((0, GT, 2.0),), 1, 0))
    assert r.status == COUNTEREXAMPLE and not r.x[0] > 2.0
    r = prove_pattern_implication(net, TAP0, [3], [3], Rule(TAP0, ((0, GT, 2.0),), 1, 0))
    assert r.proved


def test_explanation_examples():
    # layer ignores coordinate 0
    net = Network.from_arrays([[[0.0, 1.0]]], [[0.0]], ["relu"])
    sigma = Rule(TAP0, ((0, GT, 0.0),), 1, 0, acts=True)
    fixed = minimize_explanation(net, [0.3, 1.0], sigma, TAP0, [-1, -1], [1, 1])
    assert fixed == [1]
    ident = Network.from_arrays([np.eye(3)], [np.zeros(3)], ["linear"])
    x = np.array([0.2, -0.4, 0.7])
    tight = Rule(TAP0, tuple((i, LE, float(x[i])) for i in range(3))
                 + tuple((i, GT, float(x[i]) - 1e-6) for i in range(3)), 1, 0)
    assert minimize_explanation(ident, x, tight, TAP0, -np.ones(3), np.ones(3)) == [0, 1, 2]
    with pytest.raises(RuleUnsatisfiedAtInput):
        minimize_explanation(ident, x, Rule(TAP0, ((0, GT, 5.0),), 1, 0), TAP0,
                             -np.ones(3), np.ones(3))


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_explanation_matches_subset_oracle(seed):
    rng = np.random.default_rng(seed)
    net = Network.from_arrays([rng.normal(size=(3, 3)), rng.normal(size=(2, 3))],
                              [rng.normal(size=3) * 0.3, np.zeros(2)])
    tap = LayerTap("dense_0")
    x = rng.uniform(-1, 1, 3)
    v = forward_to_layer(net, x, tap)
    sigma = Rule(tap, tuple((n, GT if v[n] > 0 else LE, 0.0) for n in range(3)), 1, 0, acts=True)
    dlo, dhi = -np.ones(3), np.ones(3)

    def valid(free):
        lo = np.array([dlo[i] if i in free else x[i] for i in range(3)])
        hi = np.array([dhi[i] if i in free else x[i] for i in range(3)])
        return oracle_implication(net, 0, True, lo, hi, sigma.value_terms())

    assert minimize_explanation(net, x, sigma, tap, dlo, dhi) == greedy_fixing_oracle(valid, 3)
