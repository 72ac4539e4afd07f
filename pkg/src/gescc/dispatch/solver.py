"""Thin wrapper over scipy's HiGHS interfaces (LP via ``linprog``, MILP via ``milp``)."""
from __future__ import annotations

import numpy as np
from scipy import optimize, sparse

from gescc.errors import InfeasibleDispatchError


# default HiGHS tolerances (1e-7) would let SoC bounds slip by that much
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None, integrality=None):
    """Minimize ``c @ x``; returns ``x``. Raises on infeasibility."""
    c = np.asarray(c, dtype=float)
    if integrality is None or not np.any(integrality):
        res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                               bounds=bounds, method="highs", options=_LP_OPTIONS)
        if res.status == 4:  # numerical trouble at the tight tolerance
            res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                                   bounds=bounds, method="highs")
        if res.status != 0:
            raise InfeasibleDispatchError(f"LP failed: {res.message}")
        return res.x
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    cons = []
    if A_ub is not None:
        cons.append(optimize.LinearConstraint(A_ub, -np.inf, b_ub))
    if A_eq is not None:
        cons.append(optimize.LinearConstraint(A_eq, b_eq, b_eq))
    res = optimize.milp(c, constraints=cons, bounds=optimize.Bounds(lo, hi),
                        integrality=np.asarray(integrality))
    if res.status != 0:
        raise InfeasibleDispatchError(f"MILP failed: {res.message}")
    return res.x


def add_binaries(c, A_ub, b_ub, A_eq, bounds, pairs):
    """Append ``S_c, S_d`` binaries forbidding simultaneous charge and discharge.

    ``pairs`` lists ``(charge_index, discharge_index, pc_max, pd_max)``.
    """
    n = len(c)
    m = len(pairs)
    rows, cols, vals = [], [], []
    r = 0
    for k, (ic, id_, pcm, pdm) in enumerate(pairs):
        sc, sd = n + 2 * k, n + 2 * k + 1
        rows += [r, r]; cols += [ic, sc]; vals += [1.0, -pcm]; r += 1
        rows += [r, r]; cols += [id_, sd]; vals += [1.0, -pdm]; r += 1
        rows += [r, r]; cols += [sc, sd]; vals += [1.0, 1.0]; r += 1
    extra = sparse.csr_matrix((vals, (rows, cols)), shape=(3 * m, n + 2 * m))
    rhs = np.tile([0.0, 0.0, 1.0], m)
    if A_ub is not None:
        A_ub = sparse.vstack([sparse.hstack([sparse.csr_matrix(A_ub), sparse.csr_matrix((A_ub.shape[0], 2 * m))]), extra])
        b_ub = np.concatenate([b_ub, rhs])
    else:
        A_ub, b_ub = extra, rhs
    if A_eq is not None:
        A_eq = sparse.hstack([sparse.csr_matrix(A_eq), sparse.csr_matrix((A_eq.shape[0], 2 * m))])
    c2 = np.concatenate([c, np.zeros(2 * m)])
    bounds2 = list(bounds) + [(0.0, 1.0)] * (2 * m)
    integrality = np.concatenate([np.zeros(n), np.ones(2 * m)])
    return c2, A_ub.tocsr(), b_ub, A_eq, bounds2, integrality
