import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from layerrules.lp import solve_lp


def test_simple_feasible():
    # x + y <= 1, x >= 0.4, y >= 0.4 inside [0, 1]^2
    r = solve_lp([[1, 1], [-1, 0], [0, -1]], [1, -0.4, -0.4], [0, 0], [1, 1])
    assert r.status == "optimal"
    x = r.x
    assert x[0] + x[1] <= 1 + 1e-9 and x.min() >= 0.4 - 1e-9


def test_simple_infeasible():
    r = solve_lp([[1, 1], [-1, -1]], [1, -1.5], [0, 0], [1, 1])
    assert r.status == "infeasible"


def test_optimum():
    r = solve_lp([[1, 1]], [1.5], [0, 0], [1, 1], c=[-1, -2])
    assert r.objective == pytest.approx(-2.5)
    np.testing.assert_allclose(r.x, [0.5, 1.0], atol=1e-12)


def test_fixed_variables_and_empty_rows():
    r = solve_lp(np.zeros((0, 2)), [], [1, 2], [1, 2])
    assert r.status == "optimal" and r.x.tolist() == [1, 2]
    assert solve_lp([[0, 0]], [-1], [0, 0], [1, 1]).status == "infeasible"


def test_degenerate_cycling_instance():
    # classic Beale-style degenerate system; Bland's rule must terminate
    A = [[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]]
    r = solve_lp(A, [0, 0, 1], [0] * 4, [10] * 4, c=[-0.75, 20, -0.5, 6])
    ref = linprog([-0.75, 20, -0.5, 6], A_ub=A, b_ub=[0, 0, 1], bounds=[(0, 10)] * 4)
    assert r.objective == pytest.approx(ref.fun, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_highs(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 7)), int(rng.integers(0, 9))
    A = rng.normal(size=(m, n))
    lo = rng.uniform(-2, 0, n)
    hi = lo + rng.uniform(0, 2, n) * (rng.random(n) > 0.1)
    b = rng.normal(size=m)
    c = rng.normal(size=n)
    r = solve_lp(A, b, lo, hi, c=c)
    ref = linprog(c, A_ub=A if m else None, b_ub=b if m else None, bounds=list(zip(lo, hi)),
                  method="highs")
    assert (r.status == "optimal") == (ref.status == 0)
    if ref.status == 0:
        assert r.objective == pytest.approx(ref.fun, abs=1e-7)
        assert np.all(A @ r.x <= b + 1e-7)
        assert np.all(r.x >= lo) and np.all(r.x <= hi)
