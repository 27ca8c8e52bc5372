"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``max c @ x`` subject to rows ``a @ x (<=|>=|==) b`` and ``x >= 0``.
Sized for the small LPs in this package (tens of variables); no sparsity,
no bound handling beyond nonnegativity.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverError

PIVOT_TOL = 1e-12
COST_TOL = 1e-12
FEAS_TOL = 1e-9


def _pivot(T, basis, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = c


def _iterate(T, basis, allowed, max_iter, phase, it0):
    """Run simplex pivots on tableau ``T`` whose last row holds reduced costs.

    Bland's rule: enter the lowest-index improving column, leave on the
    lowest-index basic variable among the minimum-ratio rows.
    """
    m = T.shape[0] - 1
    it = it0
    while True:
        cost = T[m, :-1]
        entering = next((j for j in allowed if cost[j] > COST_TOL), None)
        if entering is None:
            return it
        if it >= max_iter:
            raise SolverError("iteration limit reached", iterations=it, phase=phase)
        col = T[:m, entering]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            raise SolverError("objective is unbounded", iterations=it, phase=phase)
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        leave = min(ties, key=lambda r: basis[r])
        _pivot(T, basis, leave, entering)
        it += 1


def simplex_max(c, A, senses, b, max_iter=None):
    """Return ``(x, objective, iterations)`` for the LP described above.

    Raises :class:`SolverError` on infeasibility, unboundedness or when
    ``max_iter`` pivots do not reach optimality.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, c.size)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    senses = list(senses)
    if len(senses) != m or b.size != m:
        raise ValueError("row count mismatch between A, senses and b")
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    A = A.copy()
    b = b.copy()
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0
            senses[i] = {"<=": ">=", ">=": "<=", "==": "=="}[senses[i]]

    n_slack = sum(s != "==" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = [0] * m
    s_col, a_col = n, n + n_slack
    art_cols = []
    for i, s in enumerate(senses):
        if s == "<=":
            T[i, s_col] = 1.0
            basis[i] = s_col
            s_col += 1
        else:
            if s == ">=":
                T[i, s_col] = -1.0
                s_col += 1
            T[i, a_col] = 1.0
            basis[i] = a_col
            art_cols.append(a_col)
            a_col += 1

    iterations = 0
    if art_cols:
        # phase 1: maximize -sum(artificials)
        T[m, :] = 0.0
        for i in range(m):
            if basis[i] in art_cols:
                T[m] += T[i]
        T[m, art_cols] = 0.0
        iterations = _iterate(T, basis, range(width), max_iter, 1, 0)
        if T[m, -1] > FEAS_TOL:
            raise SolverError("problem is infeasible", iterations=iterations, phase=1)
        art = set(art_cols)
        keep = []
        for i in range(m):
            if basis[i] in art:
                cand = [j for j in range(n + n_slack) if abs(T[i, j]) > PIVOT_TOL]
                if cand:
                    _pivot(T, basis, i, cand[0])
                    keep.append(i)
            else:
                keep.append(i)
        T = np.vstack([T[keep], T[m:]])
        basis = [basis[i] for i in keep]
        T = np.delete(T, art_cols, axis=1)
        m = len(keep)
        width = n + n_slack

    T[m, :] = 0.0
    T[m, :n] = c
    for i in range(m):
        if T[m, basis[i]] != 0.0:
            T[m] -= T[m, basis[i]] * T[i]
    iterations = _iterate(T, basis, range(width), max_iter, 2, iterations)

    x = np.zeros(width)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    x = x[:n]
    return x, float(c @ x), iterations
