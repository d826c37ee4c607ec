"""Explain why a hidden-layer pattern holds at one input.

The explanation is a set of input coordinates that, once fixed to their
values, force the pattern for every choice of the remaining coordinates in the
domain box. Run with ``python demos/explanations.py``.
"""

import numpy as np

from layerrules import GT, LE, LayerTap, Network, Rule, forward_to_layer, minimize_explanation
from layerrules.prover import prove_pattern_implication

rng = np.random.default_rng(3)
net = Network.from_arrays([rng.normal(size=(4, 5)), rng.normal(size=(2, 4))],
                          [rng.normal(size=4) * 0.3, np.zeros(2)])
tap = LayerTap(net.layers[0].name)
lo, hi = -np.ones(5), np.ones(5)

x = rng.uniform(-1, 1, 5)
v = forward_to_layer(net, x, tap)
# The on/off pattern of the first two neurons at x.
sigma = Rule(tap, tuple((n, GT if v[n] > 0 else LE, 0.0) for n in range(2)), 1, 0, acts=True)
print(f"x = {np.round(x, 3)}")
print(f"pattern: {sigma.describe()}")

whole = prove_pattern_implication(net, tap, lo, hi, sigma)
print(f"does the whole domain force the pattern? {whole.status}")

fixed = minimize_explanation(net, x, sigma, tap, lo, hi)
print(f"coordinates that must stay fixed: {fixed}")

# Sanity check by sampling the freed coordinates.
free = [i for i in range(5) if i not in fixed]
samples = np.tile(x, (2000, 1))
samples[:, free] = rng.uniform(-1, 1, size=(2000, len(free)))
held = all(sigma.matches((forward_to_layer(net, s, tap) > 0).astype(float)) for s in samples)
print(f"pattern held on 2000 samples with the other coordinates free: {held}")
