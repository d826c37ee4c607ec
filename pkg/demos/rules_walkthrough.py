"""Walk through the library API: infer rules from a layer, prove one, monitor inputs.

Run with ``python demos/rules_walkthrough.py``.
"""

import numpy as np

from layerrules import (Dataset, LayerTap, Network, OutputProperty, PostCondition, binarize,
                        evaluate_rule, extract_rules, fit_tree, forward, forward_to_layer,
                        label_dataset, monitor_classifiers, monitor_rules, prove_rule,
                        select_max_support)

rng = np.random.default_rng(1)

# A small 3-class classifier with two hidden ReLU layers.
net = Network.from_arrays(
    [rng.normal(size=(8, 4)), rng.normal(size=(8, 8)) / 3, rng.normal(size=(3, 8))],
    [rng.normal(size=8) * 0.2, rng.normal(size=8) * 0.2, np.zeros(3)])
X = rng.uniform(-1, 1, size=(800, 4))
train = Dataset(X, np.argmax(forward(net, X), axis=1))

# Label every input by the class the network predicts, then fit a tree on the
# on/off pattern of the second hidden layer.
tap = LayerTap(net.layers[1].name)
labels = label_dataset(net, train, PostCondition(0))
patterns = binarize(forward_to_layer(net, X, tap))
tree = fit_tree(patterns, labels, max_depth=6, metadata={"layer": str(tap), "acts": True})
rules = extract_rules(tree, tap, acts=True)
print(f"{len(rules)} rules over layer {tap}")

# Pick the best-supported rule for class 0 and see how it does on fresh data.
rule = select_max_support(rules, 0)
X_test = rng.uniform(-1, 1, size=(400, 4))
test_labels = np.argmax(forward(net, X_test), axis=1)
m = evaluate_rule(rule, binarize(forward_to_layer(net, X_test, tap)), test_labels)
print(f"rule: {rule.describe()}")
print(f"held-out precision {m.precision:.1f}%, recall {m.recall:.1f}%")

# Try to prove that the rule's pattern forces class 0 on the support box.
out = prove_rule(net, rule, OutputProperty.argmax(0), X)
print(f"proof outcome: {out.status} after {out.n_queries} queries")
for it in out.iterations:
    print(f"  iteration {it.iteration}: {len(it.queries)} queries, "
          f"adversaries before {it.labs_before}")
if out.counterexamples:
    cx = out.counterexamples[0]
    print(f"  first counterexample at iteration {cx.iteration}: predicted {int(np.argmax(cx.outputs))}")

# Monitor: correctness labels on noisy ground truth, one tree per hidden layer.
y_true = train.labels.copy()
flip = rng.random(len(y_true)) < 0.2
y_true[flip] = (y_true[flip] + 1) % 3
correct = label_dataset(net, Dataset(X, y_true), PostCondition(1))
trees, rulesets = [], []
for layer in net.layers[:-1]:
    t = LayerTap(layer.name)
    tr = fit_tree(forward_to_layer(net, X, t), correct, max_depth=5,
                  metadata={"layer": str(t), "acts": False})
    trees.append(tr)
    rulesets.append(extract_rules(tr, t))
V = Dataset(X_test)
a = monitor_rules(net, rulesets, V)
b = monitor_classifiers(net, trees, V)
print(f"monitor (rules):       {a.histogram()} in {a.elapsed_ms:.1f} ms")
print(f"monitor (classifiers): {b.histogram()} in {b.elapsed_ms:.1f} ms")
