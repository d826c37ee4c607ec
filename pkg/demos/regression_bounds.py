"""Prove output bounds for a regression network.

A rule learned on "is the prediction within tau of the target" is checked
against a constraints file that brackets the first output. Run with
``python demos/regression_bounds.py``.
"""

import os
import tempfile

import numpy as np

from layerrules import (LayerTap, Network, extract_rules, fit_tree,
                        forward, forward_to_layer, parse_constraints_file, prove_rule,
                        select_max_support)
from layerrules.prover import support_mask

rng = np.random.default_rng(9)
net = Network.from_arrays([rng.normal(size=(6, 3)), rng.normal(size=(1, 6)) / 2],
                          [rng.normal(size=6) * 0.3, np.zeros(1)])
X = rng.uniform(-1, 1, size=(600, 3))
tau = 0.3
y = forward(net, X)[:, 0] + rng.uniform(-2 * tau, 2 * tau, size=600)
close = (np.abs(forward(net, X)[:, 0] - y) < tau).astype(np.int64)

tap = LayerTap(net.layers[0].name)
tree = fit_tree(forward_to_layer(net, X, tap), close, max_depth=3)
rules = extract_rules(tree, tap)
rule = select_max_support(rules, 1)
print(f"rule for 'close to target': {rule.describe()}")

X_sup = X[support_mask(net, rule, X)]
with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "constraints.csv")
    with open(path, "w") as fh:
        fh.write("[0,MIN,0.05]\n[0,MAX,0.05]\n")  # widen the observed range by 0.05
    prop = parse_constraints_file(path, forward(net, X_sup))
print("bounds:", [(r.op, round(r.bound, 4)) for r in prop.rows])

out = prove_rule(net, rule, prop, X)
print(f"outcome: {out.status}, proved at iteration {out.proved_at}")
