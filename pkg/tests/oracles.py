"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import cvxpy as cp
import numpy as np


def dp_arbitrage(prices, E, pc_max, pd_max, eta_c, eta_d, self_discharge, soc0, lo, hi,
                 dt=1.0, step=0.01):
    """Brute-force arbitrage over a SoC grid. Returns the best profit.

    Any move between grid points whose implied power respects the rating is
    allowed; the path must end on ``soc0``.
    """
    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)
    a = 1 - self_discharge * dt
    i0 = int(np.argmin(np.abs(grid - soc0)))
    assert abs(grid[i0] - soc0) < 1e-9, "soc0 must sit on the grid"
    ok = (grid >= lo - 1e-9) & (grid <= hi + 1e-9)
    s, s2 = np.meshgrid(grid, grid, indexing="ij")
    gap = s2 - a * s
    pc = np.where(gap > 0, gap * E / (eta_c * dt), 0.0)
    pd = np.where(gap < 0, -gap * E * eta_d / dt, 0.0)
    feasible = (pc <= pc_max + 1e-9) & (pd <= pd_max + 1e-9)
    value = np.full(grid.size, -np.inf)
    value[i0] = 0.0
    for t, c in enumerate(prices):
        reward = c * (pd - pc) * dt
        cand = np.where(feasible & ok[None, :], value[:, None] + reward, -np.inf)
        value = cand.max(axis=0)
    return float(value[i0])


def lp_redispatch(E, pc_max, pd_max, eta_c, eta_d, soc_start, soc_min, soc_max, nc, dt=1.0):
    """Copper-plate unserved-energy minimization with fixed SoC bounds (cvxpy formulation)."""
    U = len(E)
    L = len(nc)
    pc = cp.Variable((U, L), nonneg=True)
    pd = cp.Variable((U, L), nonneg=True)
    soc = cp.Variable((U, L + 1))
    lc = cp.Variable(L, nonneg=True)
    cons = [soc[:, 0] == soc_start]
    for i in range(U):
        cons += [
            soc[i, 1:] == soc[i, :-1] + (eta_c[i] * pc[i] - pd[i] / eta_d[i]) * dt / E[i],
            pc[i] <= pc_max[i], pd[i] <= pd_max[i],
            soc[i, 1:] >= soc_min[i], soc[i, 1:] <= soc_max[i],
        ]
    cons += [lc >= -np.asarray(nc) - cp.sum(pd - pc, axis=0)]
    prob = cp.Problem(cp.Minimize(cp.sum(lc) * dt), cons)
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)
