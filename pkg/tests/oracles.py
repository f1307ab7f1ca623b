"""Reference computations that share no code with the package solvers."""

from __future__ import annotations

import itertools

import numpy as np


def vertex_enumeration(c, A_le, b_le, lb, ub, A_eq=None, b_eq=None, tol=1e-9):
    """Maximize ``c x`` over a bounded polytope by visiting every vertex.

    Every vertex is the solution of ``n`` linearly independent active
    constraints drawn from the inequality rows, the bounds and the equality
    rows (which are always active).  Returns ``(objective, x)`` or
    ``(None, None)`` when the polytope is empty.
    """
    c = np.asarray(c, float)
    n = c.size
    A_le = np.asarray(A_le, float).reshape(-1, n)
    b_le = np.asarray(b_le, float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float)
    eye = np.eye(n)
    cand_A = np.vstack([A_le, eye, eye])
    cand_b = np.concatenate([b_le, lb, ub])
    k = n - A_eq.shape[0]
    best, best_x = None, None
    for rows in itertools.combinations(range(cand_A.shape[0]), k):
        M = np.vstack([A_eq, cand_A[list(rows)]])
        rhs = np.concatenate([b_eq, cand_b[list(rows)]])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, rhs)
        if np.any(A_le @ x > b_le + tol) or np.any(x < lb - tol) or np.any(x > ub + tol):
            continue
        if A_eq.shape[0] and np.any(np.abs(A_eq @ x - b_eq) > tol):
            continue
        val = float(c @ x)
        if best is None or val > best + 1e-12:
            best, best_x = val, x
    return best, best_x


def dc_flows(n_nodes, lines, injections, slack=0):
    """Flows from nodal injections through angle differences ``f = (th_i - th_j) / x``."""
    B = np.zeros((n_nodes, n_nodes))
    for i, j, x in lines:
        B[i, i] += 1 / x
        B[j, j] += 1 / x
        B[i, j] -= 1 / x
        B[j, i] -= 1 / x
    keep = [k for k in range(n_nodes) if k != slack]
    theta = np.zeros(n_nodes)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], np.asarray(injections)[keep])
    return np.array([(theta[i] - theta[j]) / x for i, j, x in lines])


def two_node_welfare(capacity: float) -> float:
    """Gross welfare of the linear two-zone curves with trade limited to ``capacity``."""
    q = min(capacity, 30.0)
    return 60.0 * q - q * q


def two_node_cost(capacity: float, k_fix: float = 200.0, k_var: float = 10.0) -> float:
    return k_fix + k_var * capacity if capacity > 0 else 0.0
