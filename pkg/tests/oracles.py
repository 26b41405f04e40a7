"""Reference solvers used only by the tests.

They are written against the raw instance data rather than against the
package's relaxation builder, so agreement is evidence that both sides are
right.
"""

from __future__ import annotations

import itertools

import numpy as np

from bnbtransfer.model import LinearConstraint, Sense


def toy_enumeration(instance):
    """Optimum of a toy MILP with one continuous variable by enumerating every binary vector.

    For a fixed binary vector the remaining problem is a one-dimensional LP,
    whose feasible set is an interval; its optimum sits at an endpoint.
    Returns ``(objective, binaries)`` or ``(None, None)`` when infeasible.
    """
    assert instance.num_continuous == 1, "closed form needs exactly one continuous variable"
    nb = instance.num_binary
    A = np.array([[*c.bin_coeffs] for c in instance.constraints
                  if isinstance(c, LinearConstraint)]).reshape(-1, nb)
    g = np.array([c.cont_coeffs[0] for c in instance.constraints]).reshape(-1)
    r = np.array([c.rhs for c in instance.constraints]).reshape(-1)
    lo0, hi0 = float(instance.cont_lower[0]), float(instance.cont_upper[0])
    cb = instance.objective.bin_linear
    cy = float(instance.objective.cont_linear[0])
    maximize = instance.sense is Sense.MAXIMIZE

    best, best_a = None, None
    for bits in itertools.product((0.0, 1.0), repeat=nb):
        a = np.array(bits)
        resid = r - A @ a if len(r) else np.zeros(0)
        lo, hi = lo0, hi0
        for gj, rj in zip(g, resid):
            if gj > 0:
                hi = min(hi, rj / gj)
            elif gj < 0:
                lo = max(lo, rj / gj)
            elif rj < -1e-9:
                lo, hi = 1.0, 0.0
        if lo > hi + 1e-9:
            continue
        hi = max(hi, lo)
        y = hi if (cy > 0) == maximize else lo
        val = float(cb @ a + cy * y)
        if best is None or (val > best if maximize else val < best):
            best, best_a = val, a
    return best, best_a


def cloudran_enumeration(scenario):
    """Optimum of a Cloud-RAN scenario by solving one SOCP per RRH on/off pattern.

    Formulated directly from the channel matrix with cvxpy's complex
    variables: minimize fronthaul plus transmit power subject to every
    user's SINR and the per-RRH power cap, with switched-off RRHs silent.
    Returns ``(objective, on_pattern)`` or ``(None, None)``.
    """
    import cvxpy as cp

    L, K, N = scenario.L, scenario.K, scenario.N
    H = scenario.H / np.sqrt(scenario.noise_power)  # unit noise
    gamma = scenario.sinr_target
    eta = scenario.amp_efficiency
    cap = scenario.per_rrh_power_cap
    P = scenario.fronthaul_powers

    best, best_on = None, None
    # transmit power is nonnegative, so a pattern whose fronthaul cost alone
    # reaches the best value so far cannot win
    for on in itertools.product((0, 1), repeat=L):
        on = np.array(on)
        fixed_cost = float(P @ on)
        if best is not None and fixed_cost >= best:
            continue
        active = np.flatnonzero(np.repeat(on, N))
        if active.size == 0:
            if K == 0:
                best, best_on = fixed_cost, on
            continue
        Hs = H[:, active]
        W = cp.Variable((active.size, K), complex=True)
        cons = []
        for k in range(K):
            hk = Hs[k].conj()
            gains = hk @ W  # row of h_k^H w_i over users i
            cons.append(cp.imag(gains[k]) == 0)
            cons.append(cp.SOC(np.sqrt(1.0 + 1.0 / gamma) * cp.real(gains[k]),
                               cp.hstack([gains, np.ones(1)])))
        for l in np.flatnonzero(on):
            rows = [i for i, a in enumerate(active) if a // N == l]
            cons.append(cp.sum_squares(W[rows, :]) <= cap)
        prob = cp.Problem(cp.Minimize(fixed_cost + cp.sum_squares(W) / eta), cons)
        prob.solve(solver=cp.CLARABEL)
        if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            val = float(prob.value)
            if best is None or val < best:
                best, best_on = val, on
    return best, best_on


def lp_vertex_enumeration(c, A, b):
    """min c @ x s.t. A x <= b, x >= 0 by checking every basic solution.

    Returns ``(value, x)``; ``(None, None)`` when infeasible.  Only for
    bounded problems: the caller adds box rows so every LP has a vertex.
    """
    m, n = A.shape
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best, best_x = None, None
    for rows in itertools.combinations(range(G.shape[0]), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            val = float(c @ x)
            if best is None or val < best:
                best, best_x = val, x
    return best, best_x
