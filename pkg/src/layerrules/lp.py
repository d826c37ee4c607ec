"""Dense two-phase simplex for small bounded linear programs.

Solves ``min c.x  s.t.  A x <= b,  lo <= x <= hi`` with every bound finite.
Pivoting follows Bland's rule (lowest-index entering column, lowest-index
leaving basic variable on ratio ties), so it never cycles. Rows are scaled to
unit max-norm before solving; feasibility is decided with an absolute
tolerance of ``tol`` on the scaled rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-11
_RC_TOL = 1e-12


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible"
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    pivots: int = 0


class _Tableau:
    def __init__(self, T, basis):
        self.T = T
        self.basis = basis
        self.pivots = 0

    def pivot(self, r, c):
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = c
        self.pivots += 1

    def run(self, ncols, max_pivots):
        """Minimise the objective held in the last row over columns < ncols."""
        T = self.T
        m = T.shape[0] - 1
        while self.pivots < max_pivots:
            rc = T[m, :ncols]
            entering = np.flatnonzero(rc < -_RC_TOL)
            if entering.size == 0:
                return True
            c = int(entering[0])
            colv = T[:m, c]
            ok = colv > _PIVOT_TOL
            if not ok.any():
                return None  # unbounded
            ratios = np.full(m, np.inf)
            ratios[ok] = T[:m, -1][ok] / colv[ok]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-13 * max(1.0, abs(best)))
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, c)
        raise RuntimeError("simplex pivot limit reached")


def solve_lp(A, b, lo, hi, c=None, tol: float = FEAS_TOL, max_pivots: int = 50000) -> LPResult:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    lo = np.asarray(lo, dtype=np.float64).reshape(-1)
    hi = np.asarray(hi, dtype=np.float64).reshape(-1)
    n = lo.size
    if A.size == 0:
        A = np.zeros((0, n))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("all variable bounds must be finite")
    if np.any(lo > hi + tol):
        return LPResult("infeasible")
    hi = np.maximum(hi, lo)
    cost = np.zeros(n) if c is None else np.asarray(c, dtype=np.float64).reshape(-1)

    # eliminate variables with zero-width bounds
    width = hi - lo
    free = np.flatnonzero(width > 0)
    b_shift = b - A @ lo
    Af = A[:, free]
    d = width[free]

    # scale rows; an all-zero row is either trivially true or infeasible
    norms = np.abs(Af).max(axis=1) if Af.shape[1] else np.zeros(Af.shape[0])
    zero = norms == 0
    if np.any(b_shift[zero] < -tol * np.maximum(1.0, np.abs(b[zero]))):
        return LPResult("infeasible")
    keep = ~zero
    Af = Af[keep] / norms[keep, None]
    bs = b_shift[keep] / norms[keep]

    nf = free.size
    if nf == 0:
        return LPResult("optimal", lo.copy(), float(cost @ lo))

    # rows: general constraints then upper bounds y_j <= d_j, all with slacks
    G = np.vstack([Af, np.eye(nf)])
    rhs = np.concatenate([bs, d])
    m = G.shape[0]
    neg = rhs < 0
    G[neg] *= -1.0
    rhs = np.where(neg, -rhs, rhs)
    slack_sign = np.where(neg, -1.0, 1.0)
    art_rows = np.flatnonzero(neg)
    na = art_rows.size
    ncols = nf + m + na
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :nf] = G
    T[np.arange(m), nf + np.arange(m)] = slack_sign
    T[art_rows, nf + m + np.arange(na)] = 1.0
    T[:m, -1] = rhs
    basis = np.array([nf + i for i in range(m)], dtype=np.int64)
    basis[art_rows] = nf + m + np.arange(na)
    tab = _Tableau(T, basis)

    if na:
        # phase 1: minimise the sum of artificials
        T[m, :] = 0.0
        T[m, nf + m:nf + m + na] = 1.0
        for r in art_rows:
            T[m] -= T[r]
        tab.run(ncols, max_pivots)
        if -T[m, -1] > tol:
            return LPResult("infeasible", pivots=tab.pivots)
        # drive artificials out of the basis where possible
        for r in range(m):
            if basis[r] >= nf + m:
                cand = np.flatnonzero(np.abs(T[r, :nf + m]) > _PIVOT_TOL)
                if cand.size:
                    tab.pivot(r, int(cand[0]))
        ncols_p2 = nf + m
    else:
        ncols_p2 = ncols

    # phase 2 objective over y (x = lo + y); artificial columns are excluded
    cf = cost[free]
    T[m, :] = 0.0
    T[m, :nf] = cf
    for r in range(m):
        j = basis[r]
        if j < nf and cf[j] != 0.0:
            T[m] -= cf[j] * T[r]
    if tab.run(ncols_p2, max_pivots) is None:
        raise RuntimeError("bounded LP reported unbounded")

    y = np.zeros(ncols)
    y[basis] = T[:m, -1]
    x = lo.copy()
    x[free] += np.clip(y[:nf], 0.0, d)
    return LPResult("optimal", x, float(cost @ x), tab.pivots)
