"""Complete branch-and-bound feasibility checker for dense ReLU networks.

A query asks whether some input inside an input box drives a chosen layer
into a box (and through an activation pattern) while the outputs satisfy a
linear violation predicate. Each search node carries a phase assignment for
the ReLU neurons. Bounds are propagated symbolically: every neuron is an
affine expression over the inputs plus one auxiliary variable per unstable,
unsplit neuron, evaluated with interval arithmetic. Nodes whose violation
upper bound cannot reach the margin are closed; otherwise the node's LP
(triangle relaxation for unsplit neurons, exact once every unstable neuron
is split) either closes it, yields a witness that replays concretely, or
the widest unstable neuron is split into its inactive and active cases.
"""
from __future__ import annotations

import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InconsistentBox
from .lp import solve_lp
from .network import LayerTap, Network, forward, forward_to_layer

MARGIN = 1e-9
REPLAY_TOL = 1e-9
_EMPTY_TOL = 1e-9

SAT, UNSAT, TIMEOUT = "sat", "unsat", "timeout"


@dataclass(frozen=True)
class Budget:
    max_nodes: int = 100_000
    seconds: float = 60.0


@dataclass(frozen=True, eq=False)
class LinearPredicate:
    """``coeffs . y + const > 0`` (strict) or ``>= 0`` over network outputs."""

    coeffs: np.ndarray
    const: float = 0.0
    strict: bool = True
    tag: object = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "const", float(self.const))

    def value(self, y) -> float:
        return float(np.dot(self.coeffs, np.asarray(y, dtype=np.float64)) + self.const)

    def holds(self, y) -> bool:
        v = self.value(y)
        return v > 0 if self.strict else v >= 0

    @property
    def margin(self):
        return MARGIN if self.strict else 0.0


def beats(c: int, other: int, n_out: int, mode: str = "argmax") -> LinearPredicate:
    """Predicate saying output ``other`` beats output ``c`` (strictly)."""
    coeffs = np.zeros(n_out)
    sign = 1.0 if mode == "argmax" else -1.0
    coeffs[other] += sign
    coeffs[c] -= sign
    return LinearPredicate(coeffs, 0.0, True, other)


@dataclass(frozen=True, eq=False)
class BoxRegion:
    input_lo: np.ndarray
    input_hi: np.ndarray
    layer_lo: Optional[np.ndarray] = None
    layer_hi: Optional[np.ndarray] = None
    tap: Optional[LayerTap] = None

    def __post_init__(self):
        lo = np.asarray(self.input_lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.input_hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionMismatch("input box bounds differ in length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InconsistentBox("input box must be finite")
        if np.any(lo > hi):
            raise InconsistentBox("input box has lo > hi")
        object.__setattr__(self, "input_lo", lo)
        object.__setattr__(self, "input_hi", hi)
        if (self.layer_lo is None) != (self.layer_hi is None):
            raise InconsistentBox("layer box needs both bounds")
        if self.layer_lo is not None:
            llo = np.asarray(self.layer_lo, dtype=np.float64).reshape(-1)
            lhi = np.asarray(self.layer_hi, dtype=np.float64).reshape(-1)
            if llo.shape != lhi.shape:
                raise DimensionMismatch("layer box bounds differ in length")
            if np.any(llo > lhi):
                raise InconsistentBox("layer box has lo > hi")
            if self.tap is None:
                raise InconsistentBox("a layer box needs a tap")
            object.__setattr__(self, "layer_lo", llo)
            object.__setattr__(self, "layer_hi", lhi)

    def contains_input(self, x, tol=0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.input_lo - tol) and np.all(x <= self.input_hi + tol))

    def contains_layer(self, v, tol=0.0) -> bool:
        if self.layer_lo is None:
            return True
        v = np.asarray(v)
        return bool(np.all(v >= self.layer_lo - tol) and np.all(v <= self.layer_hi + tol))


@dataclass
class QueryResult:
    status: str
    x: Optional[np.ndarray] = None
    nodes: int = 0
    elapsed: float = 0.0
    reason: str = ""

    @property
    def sat(self):
        return self.status == SAT

    @property
    def unsat(self):
        return self.status == UNSAT


# ---------------------------------------------------------------------------


@dataclass
class _Node:
    phases: np.ndarray  # int8 per ReLU neuron: -1 inactive, +1 active, 0 unsplit


@dataclass
class _Analysis:
    feasible: bool
    rows: list = field(default_factory=list)  # (coeff vector, rhs): coeff . vars <= rhs
    vlo: list = field(default_factory=list)
    vhi: list = field(default_factory=list)
    v_lin: Optional[np.ndarray] = None
    v_c: float = 0.0
    free: list = field(default_factory=list)  # (width, neuron id, z_lin, z_c)


def _interval(lin, c, vlo, vhi):
    pos = np.maximum(lin, 0.0)
    neg = np.minimum(lin, 0.0)
    return c + pos @ vlo + neg @ vhi, c + pos @ vhi + neg @ vlo


class _Query:
    def __init__(self, net: Network, box: BoxRegion, sigma, violation: LinearPredicate):
        if box.input_lo.size != net.input_dim:
            raise DimensionMismatch(f"input box has {box.input_lo.size} dims, network {net.input_dim}")
        if violation.coeffs.size != net.output_dim:
            raise DimensionMismatch("violation predicate does not match the output width")
        self.net = net
        self.box = box
        self.violation = violation
        tap = box.tap
        if sigma is not None:
            if tap is None:
                tap = sigma.layer
            elif sigma.layer != tap:
                raise InconsistentBox(f"sigma speaks about {sigma.layer}, box about {tap}")
        self.tap = tap
        self.offsets = []
        h = 0
        for layer in net.layers:
            self.offsets.append(h)
            if layer.activation == "relu":
                h += layer.out_dim
        self.n_relu = h
        self.tap_k = None
        if tap is not None:
            self.tap_k = net.layer_index(tap.layer_name)
            d = net.layers[self.tap_k].out_dim
            lo = np.full(d, -np.inf)
            hi = np.full(d, np.inf)
            strict = np.zeros(d, dtype=bool)
            if box.layer_lo is not None:
                if box.layer_lo.size != d:
                    raise DimensionMismatch(f"layer box has {box.layer_lo.size} dims, tap {d}")
                lo, hi = box.layer_lo.copy(), box.layer_hi.copy()
            for n, op, t in (sigma.value_terms() if sigma is not None else ()):
                if n >= d:
                    raise DimensionMismatch(f"sigma neuron {n} outside tap of width {d}")
                if op == "<=":
                    hi[n] = min(hi[n], t)
                elif t > lo[n] or (t == lo[n]):
                    lo[n], strict[n] = t, True
            self.tap_lo_raw, self.tap_hi_raw = lo, hi
            self.tap_lo = np.where(strict, lo + MARGIN, lo)
            self.tap_hi = hi
            # a post-activation tap on a linear layer is the affine value
            self.tap_pre = (not tap.post_activation) or net.layers[self.tap_k].activation == "linear"

    # --- bound propagation ------------------------------------------------

    def analyze(self, phases) -> _Analysis:
        net = self.net
        I = net.input_dim
        vlo = list(self.box.input_lo)
        vhi = list(self.box.input_hi)
        H_lin = np.eye(I)
        H_c = np.zeros(I)
        rows = []
        free = []

        def new_var(lo, hi):
            vlo.append(float(lo))
            vhi.append(float(hi))
            return len(vlo) - 1

        def apply_tap(E_lin, E_c):
            """Intersect tap values with the tap box; returns updated expressions."""
            elo, ehi = _interval(E_lin, E_c, np.array(vlo), np.array(vhi))
            nlo = np.maximum(elo, self.tap_lo)
            nhi = np.minimum(ehi, self.tap_hi)
            if np.any(nlo > nhi + _EMPTY_TOL):
                return None
            tighten = (self.tap_lo > elo) | (self.tap_hi < ehi)
            if not tighten.any():
                return E_lin, E_c
            idx = np.flatnonzero(tighten)
            new_ids = [new_var(nlo[i], max(nhi[i], nlo[i])) for i in idx]
            nv = len(vlo)
            L = np.zeros((E_lin.shape[0], nv))
            L[:, :E_lin.shape[1]] = E_lin
            C = E_c.copy()
            for i, t in zip(idx, new_ids):
                # E_i - t <= 0 and t - E_i <= 0
                row = L[i].copy()
                row[t] -= 1.0
                rows.append((row, -E_c[i]))
                rows.append((-row, E_c[i]))
                L[i] = 0.0
                L[i, t] = 1.0
                C[i] = 0.0
            return L, C

        for k, layer in enumerate(net.layers):
            Z_lin = layer.weights @ H_lin
            Z_c = layer.weights @ H_c + layer.bias
            at_tap = k == self.tap_k
            if at_tap and self.tap_pre:
                res = apply_tap(Z_lin, Z_c)
                if res is None:
                    return _Analysis(False)
                Z_lin, Z_c = res
            if layer.activation != "relu":
                H_lin, H_c = Z_lin, Z_c
                continue
            zlo, zhi = _interval(Z_lin, Z_c, np.array(vlo), np.array(vhi))
            ph = phases[self.offsets[k]:self.offsets[k] + layer.out_dim].astype(np.int64)
            if at_tap and not self.tap_pre:
                if np.any(self.tap_hi < 0):
                    return _Analysis(False)
                forced_on = (ph == 0) & (self.tap_lo > 0)
                forced_off = (ph == 0) & (self.tap_hi <= 0)
                ph = np.where(forced_on, 1, np.where(forced_off, -1, ph))
            clo = np.where(ph == 1, np.maximum(zlo, 0.0), zlo)
            chi = np.where(ph == -1, np.minimum(zhi, 0.0), zhi)
            if np.any(clo > chi + _EMPTY_TOL):
                return _Analysis(False)
            nv0 = len(vlo)
            out_lin = np.zeros((layer.out_dim, nv0))
            out_c = np.zeros(layer.out_dim)
            pending = []
            for j in range(layer.out_dim):
                if ph[j] == 1:
                    if zlo[j] < 0:
                        rows.append((-Z_lin[j], Z_c[j]))
                    out_lin[j], out_c[j] = Z_lin[j], Z_c[j]
                elif ph[j] == -1:
                    if zhi[j] > 0:
                        rows.append((Z_lin[j].copy(), -Z_c[j]))
                elif zlo[j] >= 0:
                    out_lin[j], out_c[j] = Z_lin[j], Z_c[j]
                elif zhi[j] <= 0:
                    pass
                else:
                    r = new_var(0.0, zhi[j])
                    pending.append((j, r))
                    free.append((zhi[j] - zlo[j], self.offsets[k] + j, Z_lin[j], Z_c[j]))
                    # z - r <= 0
                    row = np.zeros(r + 1)
                    row[:nv0] = Z_lin[j]
                    row[r] = -1.0
                    rows.append((row, -Z_c[j]))
                    # r - s z <= -s zlo   (upper side of the triangle)
                    s = zhi[j] / (zhi[j] - zlo[j])
                    row = np.zeros(r + 1)
                    row[:nv0] = -s * Z_lin[j]
                    row[r] = 1.0
                    rows.append((row, s * Z_c[j] - s * zlo[j]))
            nv = len(vlo)
            H_lin = np.zeros((layer.out_dim, nv))
            H_lin[:, :nv0] = out_lin
            H_c = out_c
            for j, r in pending:
                H_lin[j, r] = 1.0
            if at_tap and not self.tap_pre:
                res = apply_tap(H_lin, H_c)
                if res is None:
                    return _Analysis(False)
                H_lin, H_c = res

        v = self.violation
        v_lin = v.coeffs @ H_lin
        v_c = float(v.coeffs @ H_c + v.const)
        _, vub = _interval(v_lin, v_c, np.array(vlo), np.array(vhi))
        if vub < v.margin:
            return _Analysis(False)
        return _Analysis(True, rows, vlo, vhi, v_lin, v_c, free)

    def solve_node(self, an: _Analysis):
        nv = len(an.vlo)
        A = np.zeros((len(an.rows) + 1, nv))
        b = np.zeros(len(an.rows) + 1)
        for i, (row, rhs) in enumerate(an.rows):
            A[i, :row.size] = row
            b[i] = rhs
        # violation: v_lin . x + v_c >= margin
        A[-1, :an.v_lin.size] = -an.v_lin
        b[-1] = an.v_c - self.violation.margin
        cost = np.zeros(nv)
        cost[:an.v_lin.size] = -an.v_lin
        return solve_lp(A, b, an.vlo, an.vhi, cost)

    # --- concrete replay --------------------------------------------------

    def replay(self, x) -> bool:
        x = np.clip(np.asarray(x, dtype=np.float64), self.box.input_lo, self.box.input_hi)
        if self.tap is not None:
            v = forward_to_layer(self.net, x, self.tap)
            if np.any(v < self.tap_lo_raw - REPLAY_TOL) or np.any(v > self.tap_hi_raw + REPLAY_TOL):
                return False
        return self.violation.holds(forward(self.net, x))


class _Search:
    def __init__(self, q: _Query, budget: Budget):
        self.q = q
        self.budget = budget
        self.lock = threading.Lock()
        self.nodes = 0
        self.start = time.perf_counter()
        self.witness = None
        self.exhausted = False
        self.numeric = False

    def _take(self) -> bool:
        with self.lock:
            if self.witness is not None:
                return False
            if self.nodes >= self.budget.max_nodes or \
                    time.perf_counter() - self.start > self.budget.seconds:
                self.exhausted = True
                return False
            self.nodes += 1
            return True

    def expand(self, node: _Node):
        """Process one node: returns child nodes, or [] when it is closed."""
        q = self.q
        an = q.analyze(node.phases)
        if not an.feasible:
            return []
        lp = q.solve_node(an)
        if lp.status != "optimal":
            return []
        x = lp.x[:q.net.input_dim]
        if q.replay(x):
            with self.lock:
                if self.witness is None:
                    self.witness = np.clip(x, q.box.input_lo, q.box.input_hi)
            return []
        if not an.free:
            self.numeric = True
            return []
        width, nid, z_lin, z_c = max(an.free, key=lambda f: (f[0], -f[1]))
        z_at = float(z_lin @ lp.x[:z_lin.size] + z_c)
        off = node.phases.copy()
        off[nid] = -1
        on = node.phases.copy()
        on[nid] = 1
        # the first child returned is explored first
        return [_Node(on), _Node(off)] if z_at >= 0 else [_Node(off), _Node(on)]

    def dfs(self, root: _Node):
        stack = [root]
        while stack:
            if not self._take():
                return
            children = self.expand(stack.pop())
            stack.extend(reversed(children))

    def frontier(self, root: _Node, size: int):
        queue = deque([root])
        while queue and len(queue) < size:
            if not self._take():
                return []
            queue.extend(self.expand(queue.popleft()))
        return list(queue)


def solve_query(net: Network, box: BoxRegion, sigma=None, violation: LinearPredicate = None,
                budget: Budget = Budget(), workers: int = 1) -> QueryResult:
    """Decide whether the region admits an input whose outputs satisfy ``violation``.

    UNSAT is a proof. SAT carries an input that concretely satisfies the box,
    the layer constraints (within 1e-9) and the violation predicate. TIMEOUT
    is returned when the node or time budget runs out first.
    """
    if violation is None:
        raise ValueError("a violation predicate is required")
    q = _Query(net, box, sigma, violation)
    search = _Search(q, budget)
    root = _Node(np.zeros(q.n_relu, dtype=np.int8))
    if workers <= 1:
        search.dfs(root)
    else:
        roots = search.frontier(root, 2 * workers)
        if roots and search.witness is None:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(search.dfs, roots))
    elapsed = time.perf_counter() - search.start
    if search.witness is not None:
        return QueryResult(SAT, search.witness, search.nodes, elapsed)
    if search.exhausted:
        return QueryResult(TIMEOUT, None, search.nodes, elapsed, "budget exhausted")
    if search.numeric:
        return QueryResult(TIMEOUT, None, search.nodes, elapsed,
                           "LP solution failed concrete replay")
    return QueryResult(UNSAT, None, search.nodes, elapsed)
