"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``min c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and
``lo <= x <= hi``.  Sized for the small dense programs met at tree nodes;
no attempt is made at sparse linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_EPS = 1e-9
FEAS_EPS = 1e-8


@dataclass
class LpResult:
    status: str  # "optimal", "infeasible", "unbounded", "iteration_limit"
    x: np.ndarray | None
    fun: float | None
    iterations: int = 0


def _pivot(tab, basis, r, j):
    tab[r] /= tab[r, j]
    col = tab[:, j].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])
    basis[r] = j


def _run(tab, basis, cost, allowed, max_iter):
    """Primal simplex on a tableau already in canonical form for ``basis``."""
    n = tab.shape[1] - 1
    for it in range(max_iter):
        rc = cost[:n] - cost[basis] @ tab[:, :n]
        candidates = np.flatnonzero((rc < -PIVOT_EPS) & allowed)
        if candidates.size == 0:
            return "optimal", it
        j = candidates[0]  # Bland: lowest-index improving column
        col = tab[:, j]
        rows = np.flatnonzero(col > PIVOT_EPS)
        if rows.size == 0:
            return "unbounded", it
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_EPS * max(1.0, abs(best))]
        r = ties[np.argmin(basis[ties])]  # Bland: lowest-index leaving variable
        _pivot(tab, basis, r, j)
    return "iteration_limit", max_iter


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lo=None, hi=None,
             max_iter: int = 10_000) -> LpResult:
    c = np.asarray(c, float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float).ravel()
    lo = np.zeros(n) if lo is None else np.asarray(lo, float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, float)
    if A_ub.shape[1] != n or A_eq.shape[1] != n:
        raise ValueError("constraint matrices do not match the cost vector")
    if np.any(lo > hi):
        return LpResult("infeasible", None, None)

    # x = x0 + T @ y with y >= 0
    cols, x0 = [], np.zeros(n)
    extra_ub = []  # (column, bound) for y_col <= bound
    for j in range(n):
        if np.isfinite(lo[j]):
            x0[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(hi[j]):
                extra_ub.append((len(cols) - 1, hi[j] - lo[j]))
        elif np.isfinite(hi[j]):
            x0[j] = hi[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    T = np.zeros((n, ny))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s

    ub_rows = A_ub @ T
    ub_rhs = b_ub - A_ub @ x0
    if extra_ub:
        box = np.zeros((len(extra_ub), ny))
        for i, (k, _) in enumerate(extra_ub):
            box[i, k] = 1.0
        ub_rows = np.vstack([ub_rows, box])
        ub_rhs = np.concatenate([ub_rhs, [b for _, b in extra_ub]])
    eq_rows = A_eq @ T
    eq_rhs = b_eq - A_eq @ x0
    m_ub, m_eq = len(ub_rhs), len(eq_rhs)
    m = m_ub + m_eq

    # columns: y (ny) | slacks (m_ub) | artificials (m) | rhs
    nz = ny + m_ub
    tab = np.zeros((m, nz + m + 1))
    tab[:m_ub, :ny] = ub_rows
    tab[:m_ub, ny:nz] = np.eye(m_ub)
    tab[m_ub:, :ny] = eq_rows
    tab[:, -1] = np.concatenate([ub_rhs, eq_rhs])
    neg = tab[:, -1] < 0
    tab[neg, :nz] *= -1.0
    tab[neg, -1] *= -1.0

    basis = np.empty(m, dtype=np.int64)
    art_rows = []
    for i in range(m):
        if i < m_ub and not neg[i]:
            basis[i] = ny + i
        else:
            basis[i] = nz + i
            tab[i, nz + i] = 1.0
            art_rows.append(i)

    iters = 0
    all_cols = np.ones(nz + m, dtype=bool)
    if art_rows:
        cost1 = np.zeros(nz + m)
        cost1[nz:] = 1.0
        status, it = _run(tab, basis, cost1, all_cols, max_iter)
        iters += it
        if status == "iteration_limit":
            return LpResult(status, None, None, iters)
        infeas = float(cost1[basis] @ tab[:, -1])
        if infeas > FEAS_EPS * (1.0 + np.abs(tab[:, -1]).max(initial=0.0)):
            return LpResult("infeasible", None, None, iters)
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= nz:
                nonzero = np.flatnonzero(np.abs(tab[i, :nz]) > PIVOT_EPS)
                if nonzero.size:
                    _pivot(tab, basis, i, nonzero[0])
                else:
                    keep[i] = False  # redundant row
        tab, basis = tab[keep], basis[keep]

    cost2 = np.zeros(nz + m)
    cost2[:ny] = c @ T
    allowed = np.zeros(nz + m, dtype=bool)
    allowed[:nz] = True
    status, it = _run(tab, basis, cost2, allowed, max_iter - iters)
    iters += it
    if status != "optimal":
        return LpResult(status, None, None, iters)
    z = np.zeros(nz + m)
    z[basis] = tab[:, -1]
    x = x0 + T @ z[:ny]
    return LpResult("optimal", x, float(c @ x), iters)
