"""Pre-dispatch arbitrage, emergency re-dispatch and rule-based recovery."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from gescc.dispatch.solver import add_binaries, solve
from gescc.dispatch.units import DispatchSchedule, GesUnit
from gescc.drcc import Affine, ChanceSpec, reformulate
from gescc.errors import InfeasibleDispatchError
from gescc.stochastic import DiscomfortState, incentive_quantile

REG = 1e-6  # tie-break weight on throughput
OVERLAP_TOL = 1e-7


def _rebuild_soc(unit: GesUnit, soc0: float, pc, pd, dt: float) -> np.ndarray:
    soc = np.empty(len(pc) + 1)
    soc[0] = soc0
    a = unit.decay(dt)
    k = dt / unit.energy_capacity
    for t in range(len(pc)):
        soc[t + 1] = a * soc[t] + (unit.eta_c * pc[t] - pd[t] / unit.eta_d) * k
    return soc


def _cancel_overlap(unit: GesUnit, pc, pd):
    """Remove simultaneous charge/discharge while keeping each slot's SoC change."""
    pc, pd = np.array(pc, dtype=float), np.array(pd, dtype=float)
    net = unit.eta_c * pc - pd / unit.eta_d
    both = (pc > 0) & (pd > 0)
    pc[both] = np.where(net[both] > 0, net[both] / unit.eta_c, 0.0)
    pd[both] = np.where(net[both] < 0, -net[both] * unit.eta_d, 0.0)
    return pc, pd


def _snap_to_bounds(unit: GesUnit, soc0: float, pc, pd, lo, hi, dt: float, tol: float = 1e-6):
    """Rebuild SoC, moving slots that slipped past a bound by less than ``tol``
    (solver feasibility tolerance) exactly onto it. Edits ``pc``/``pd`` in place."""
    soc = np.empty(len(pc) + 1)
    soc[0] = soc0
    for t in range(len(pc)):
        s = unit.step_soc(soc[t], pc[t], pd[t], dt)
        target = min(max(s, lo[t]), hi[t])
        if target != s and abs(target - s) <= tol:
            pc[t], pd[t] = _set_last_slot(unit, soc[t], target, dt)
            s = target
        soc[t + 1] = s
    return soc


def _set_last_slot(unit: GesUnit, soc_prev: float, target: float, dt: float) -> tuple[float, float]:
    """Powers for one slot moving ``soc_prev`` exactly onto ``target``."""
    x = (target - unit.decay(dt) * soc_prev) * unit.energy_capacity / dt
    if x >= 0:
        return x / unit.eta_c, 0.0
    return 0.0, -x * unit.eta_d


# ------------------------------------------------------------ pre-dispatch

def pre_dispatch(unit: GesUnit, prices, T: int | None = None, soc0: float | None = None,
                 withhold: float | None = None, dt: float = 1.0, slot_offset: int = 0) -> DispatchSchedule:
    """Price-taking arbitrage over ``T`` slots with terminal SoC equal to ``soc0``.

    SoC is kept above ``max(diu lower, withhold)`` and below the DIU upper bound.
    """
    prices = np.asarray(prices, dtype=float)
    T = len(prices) if T is None else int(T)
    if T < 1 or len(prices) < T:
        raise ValueError(f"need T >= 1 prices, got T={T} with {len(prices)} prices")
    prices = prices[:T]
    soc0 = unit.initial_soc if soc0 is None else float(soc0)
    withhold = unit.soc_withhold if withhold is None else float(withhold)
    slots = slot_offset + np.arange(T)
    lo = np.maximum(unit.diu.lower(slots + 1), withhold)
    hi = unit.diu.upper(slots + 1)
    if soc0 < withhold - 1e-12:
        raise InfeasibleDispatchError(f"{unit.name}: soc0={soc0} is below soc_withhold={withhold}")
    lo0, hi0 = float(unit.diu.lower(slot_offset)), float(unit.diu.upper(slot_offset))
    if soc0 < lo0 - 1e-12:
        raise InfeasibleDispatchError(f"{unit.name}: soc0={soc0} is below the DIU lower bound {lo0}")
    if soc0 > hi0 + 1e-12:
        raise InfeasibleDispatchError(f"{unit.name}: soc0={soc0} exceeds the DIU upper bound {hi0}")
    if np.any(lo > hi + 1e-12):
        raise InfeasibleDispatchError(f"{unit.name}: soc_withhold={withhold} exceeds the DIU upper bound")

    a = unit.decay(dt)
    kc = unit.eta_c * dt / unit.energy_capacity
    kd = dt / (unit.eta_d * unit.energy_capacity)
    # x = [pc(T), pd(T), s(T)]
    n = 3 * T
    c = np.concatenate([prices * dt + REG, -prices * dt + REG, np.zeros(T)])
    r = np.arange(T)
    rows = np.concatenate([r, r, r, r[1:]])
    cols = np.concatenate([2 * T + r, r, T + r, 2 * T + r[1:] - 1])
    vals = np.concatenate([np.ones(T), -kc * np.ones(T), kd * np.ones(T), -a * np.ones(T - 1)])
    A_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(T, n))
    b_eq = np.zeros(T)
    b_eq[0] = a * soc0
    s_lo, s_hi = lo.copy(), hi.copy()
    s_lo[-1] = s_hi[-1] = soc0
    if s_lo[-1] < lo[-1] - 1e-12 or s_hi[-1] > hi[-1] + 1e-12:
        raise InfeasibleDispatchError(f"{unit.name}: terminal soc0={soc0} outside end-of-horizon bounds")
    bounds = ([(0.0, unit.p_charge_max)] * T + [(0.0, unit.p_discharge_max)] * T
              + list(zip(s_lo, s_hi)))
    x = solve(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds)
    pc, pd = x[:T].copy(), x[T:2 * T].copy()
    if np.max(np.minimum(pc, pd)) > OVERLAP_TOL:
        if unit.eta_c * unit.eta_d >= 1 - 1e-12:
            m = np.minimum(pc, pd)  # lossless: cancelling overlap leaves SoC unchanged
            pc, pd = pc - m, pd - m
        else:
            pairs = [(t, T + t, unit.p_charge_max, unit.p_discharge_max) for t in range(T)]
            c2, A2, b2, Aeq2, bnd2, integ = add_binaries(c, None, None, A_eq, bounds, pairs)
            x = solve(c2, A2, b2, Aeq2, b_eq, bnd2, integ)
            pc, pd = x[:T].copy(), x[T:2 * T].copy()
    pc, pd = _cancel_overlap(unit, pc, pd)  # residue of the MIP integrality tolerance
    pc[pc < 1e-10] = 0.0
    pd[pd < 1e-10] = 0.0
    soc = _snap_to_bounds(unit, soc0, pc, pd, lo, hi, dt)
    pc[-1], pd[-1] = _set_last_slot(unit, soc[-2], soc0, dt)
    soc[-1] = soc0
    sched = DispatchSchedule(pc[None, :], pd[None, :], soc[None, :], dt, "PD")
    sched.objective = sched.profit(prices)
    return sched


def hold_full(unit: GesUnit, T: int, dt: float = 1.0, slot_offset: int = 0) -> DispatchSchedule:
    """Greedy reserve posture: sit at the DIU upper bound, topping up self-discharge."""
    target = unit.diu.upper(slot_offset + np.arange(T + 1)).astype(float)
    pc = np.zeros(T)
    pd = np.zeros(T)
    for t in range(T):
        pc[t], pd[t] = _set_last_slot(unit, target[t], target[t + 1], dt)
    pc = np.minimum(pc, unit.p_charge_max)
    pd = np.minimum(pd, unit.p_discharge_max)
    soc = _rebuild_soc(unit, target[0], pc, pd, dt)
    return DispatchSchedule(pc[None, :], pd[None, :], soc[None, :], dt, "PD")


def peak_shave(units: list[GesUnit], net_load, dt: float = 1.0, slot_offset: int = 0) -> DispatchSchedule:
    """Fixed schedule minimizing the peak of ``net_load`` over one day.

    Units start and end full (DIU upper bound). Used by the fixed-dispatch method.
    """
    net_load = np.asarray(net_load, dtype=float)
    T, U = len(net_load), len(units)
    slots = slot_offset + np.arange(T + 1)
    nv = 3 * T * U + 1
    iy = nv - 1
    c = np.zeros(nv)
    c[iy] = 1.0
    eq_r, eq_c, eq_v, b_eq = [], [], [], []
    ub_r, ub_c, ub_v = [], [], []
    bounds = []
    soc0s = []
    for i, u in enumerate(units):
        base = 3 * T * i
        a = u.decay(dt)
        kc = u.eta_c * dt / u.energy_capacity
        kd = dt / (u.eta_d * u.energy_capacity)
        up = u.diu.upper(slots)
        lo = u.diu.lower(slots)
        soc0s.append(float(up[0]))
        for t in range(T):
            row = i * T + t
            eq_r += [row, row, row]
            eq_c += [base + 2 * T + t, base + t, base + T + t]
            eq_v += [1.0, -kc, kd]
            if t > 0:
                eq_r.append(row); eq_c.append(base + 2 * T + t - 1); eq_v.append(-a)
            b_eq.append(a * up[0] if t == 0 else 0.0)
        bounds += [(0.0, u.p_charge_max)] * T + [(0.0, u.p_discharge_max)] * T
        s_b = list(zip(lo[1:], up[1:]))
        s_b[-1] = (up[0], up[0])
        bounds += s_b
        c[base:base + 2 * T] += REG
    for t in range(T):  # net_load + sum(pc - pd) - y <= 0
        for i in range(U):
            base = 3 * T * i
            ub_r += [t, t]; ub_c += [base + t, base + T + t]; ub_v += [1.0, -1.0]
        ub_r.append(t); ub_c.append(iy); ub_v.append(-1.0)
    bounds.append((None, None))
    A_eq = sparse.csr_matrix((eq_v, (eq_r, eq_c)), shape=(T * U, nv))
    A_ub = sparse.csr_matrix((ub_v, (ub_r, ub_c)), shape=(T, nv))
    x = solve(c, A_ub, -net_load, A_eq, np.asarray(b_eq), bounds)
    out = DispatchSchedule.empty(U, T, dt, "PD")
    for i, u in enumerate(units):
        base = 3 * T * i
        pc, pd = x[base:base + T].copy(), x[base + T:base + 2 * T].copy()
        m = np.minimum(pc, pd)
        pc, pd = pc - m, pd - m
        pc[pc < 1e-10] = 0.0
        pd[pd < 1e-10] = 0.0
        soc = _rebuild_soc(u, soc0s[i], pc, pd, dt)
        pc[-1], pd[-1] = _set_last_slot(u, soc[-2], soc0s[i], dt)
        soc[-1] = soc0s[i]
        out.p_charge[i], out.p_discharge[i], out.soc[i] = pc, pd, soc
    return out


# ------------------------------------------------------------ re-dispatch

@dataclass
class RedispatchResult:
    schedule: DispatchSchedule
    curtailment: np.ndarray  # (groups, L) MW
    discomfort: np.ndarray  # (units, L) D along the window (0 for units without DDU)
    floor_slack: np.ndarray  # (units, L) relaxation applied to keep the LP feasible


def discomfort_path(unit: GesUnit, memory: float, pd, soc_after, T_day: int, slot_offset: int = 0):
    """Discomfort along a call given discharge and post-slot SoC."""
    spec = unit.ddu
    pd = np.asarray(pd, dtype=float)
    intensity = np.cumsum(pd) / (unit.p_discharge_max * T_day) if unit.p_discharge_max > 0 else 0 * pd
    base = unit.diu.baseline(slot_offset + 1 + np.arange(len(pd)))
    dev = np.abs(np.asarray(soc_after, dtype=float) - base)
    return spec.rho * memory + (1 - spec.rho) * (spec.lam * intensity + (1 - spec.lam) * dev)


def re_dispatch(units: list[GesUnit], nc, soc_start, discomfort_states=None, chance: ChanceSpec | None = None,
                load=None, available=None, groups=None, cm_price: float = 2000.0, T_day: int = 24,
                dt: float = 1.0, slot_offset: int = 0) -> RedispatchResult:
    """Minimize unserved energy over an emergency window.

    ``nc`` is ``(L,)`` (copper plate) or ``(G, L)`` (per-bus groups) net capacity.
    Units with a ``ddu`` spec get the reformed chance constraint on their
    post-slot SoC when ``chance`` is given; the others (or all units when
    ``chance`` is None) keep the deterministic DIU lower bound.
    """
    nc = np.atleast_2d(np.asarray(nc, dtype=float))
    G, L = nc.shape
    U = len(units)
    load = np.full((G, L), np.inf) if load is None else np.atleast_2d(np.asarray(load, dtype=float))
    available = np.ones((U, L)) if available is None else np.asarray(available, dtype=float).reshape(U, L)
    groups = np.zeros(U, dtype=int) if groups is None else np.asarray(groups, dtype=int)
    soc_start = np.asarray(soc_start, dtype=float).reshape(U)
    if discomfort_states is None:
        discomfort_states = [DiscomfortState() for _ in units]
    slots_after = slot_offset + 1 + np.arange(L)

    chance_units = [chance is not None and u.ddu is not None for u in units]
    # layout: per unit [pc(L), pd(L), s(L), z(L) if chance], then lc(G*L)
    offs = []
    n = 0
    for i in range(U):
        offs.append(n)
        n += (4 if chance_units[i] else 3) * L
    ilc = n
    n += G * L

    c = np.zeros(n)
    bounds: list = [None] * n
    eq_r, eq_c, eq_v, b_eq = [], [], [], []
    ub_rows: list[np.ndarray] = []
    b_ub: list[float] = []
    slack = np.zeros((U, L))
    x_idle = np.zeros(n)

    for i, u in enumerate(units):
        o = offs[i]
        a = u.decay(dt)
        kc = u.eta_c * dt / u.energy_capacity
        kd = dt / (u.eta_d * u.energy_capacity)
        for j in range(L):
            r = i * L + j
            eq_r += [r, r, r]
            eq_c += [o + 2 * L + j, o + j, o + L + j]
            eq_v += [1.0, -kc, kd]
            if j > 0:
                eq_r.append(r); eq_c.append(o + 2 * L + j - 1); eq_v.append(-a)
            b_eq.append(a * soc_start[i] if j == 0 else 0.0)
            bounds[o + j] = (0.0, u.p_charge_max * available[i, j])
            bounds[o + L + j] = (0.0, u.p_discharge_max * available[i, j])
        c[o:o + 2 * L] = REG
        idle = soc_start[i] * a ** np.arange(1, L + 1)
        x_idle[o + 2 * L:o + 3 * L] = idle
        hi = u.diu.upper(slots_after)
        if chance_units[i]:
            lo = np.zeros(L)
        else:
            lo = np.minimum(u.diu.lower(slots_after), idle)
            slack[i] = u.diu.lower(slots_after) - lo
        hi = np.maximum(hi, idle)
        for j in range(L):
            bounds[o + 2 * L + j] = (float(lo[j]), float(hi[j]))
        if chance_units[i]:
            spec = u.ddu
            base = u.diu.baseline(slots_after)
            x_idle[o + 3 * L:o + 4 * L] = np.abs(idle - base)
            c[o + 3 * L:o + 4 * L] = 1e-7
            for j in range(L):
                bounds[o + 3 * L + j] = (0.0, None)
                for sign in (1.0, -1.0):  # z >= |s - B|
                    row = np.zeros(n)
                    row[o + 2 * L + j] = sign
                    row[o + 3 * L + j] = -1.0
                    ub_rows.append(row)
                    b_ub.append(sign * base[j])
            memory = discomfort_states[i].memory_mean
            qg = incentive_quantile(u.diu.lower(slots_after), cm_price, spec)
            span = base - qg
            k_int = (1 - spec.rho) * spec.lam / (u.p_discharge_max * T_day) if u.p_discharge_max > 0 else 0.0
            for j in range(L):
                D = np.zeros(n)
                D[o + L:o + L + j + 1] = k_int
                D[o + 3 * L + j] = (1 - spec.rho) * (1 - spec.lam)
                D_aff = Affine(spec.rho * memory, D)
                mu_h = D_aff.scale(spec.beta)
                mu = mu_h.scale(span[j]) + Affine.constant(qg[j], n)
                sigma = mu_h.scale(abs(span[j]) * spec.cv_h)
                radius = Affine.constant(abs(span[j]), n)
                rhs = Affine(0.0, np.eye(1, n, o + 2 * L + j)[0])
                row, cst = reformulate(mu, sigma, radius, rhs, chance).as_row()
                viol = max(0.0, float(row @ x_idle) - cst)
                slack[i, j] = viol
                ub_rows.append(row)
                b_ub.append(cst + viol)

    for g in range(G):
        members = np.flatnonzero(groups == g)
        for j in range(L):
            # -sum(pd - pc) - lc <= nc
            row = np.zeros(n)
            for i in members:
                row[offs[i] + j] = 1.0
                row[offs[i] + L + j] = -1.0
            row[ilc + g * L + j] = -1.0
            ub_rows.append(row)
            b_ub.append(nc[g, j])
            cap = load[g, j]
            bounds[ilc + g * L + j] = (0.0, None if math.isinf(cap) else float(max(cap, 0.0)))
    c[ilc:] = dt

    A_eq = sparse.csr_matrix((eq_v, (eq_r, eq_c)), shape=(U * L, n))
    A_ub = sparse.csr_matrix(np.vstack(ub_rows)) if ub_rows else None
    b_ub_a = np.asarray(b_ub) if ub_rows else None
    x = solve(c, A_ub, b_ub_a, A_eq, np.asarray(b_eq), bounds)

    out = DispatchSchedule.empty(U, L, dt, "RD")
    dpath = np.zeros((U, L))
    for i, u in enumerate(units):
        o = offs[i]
        pc, pd = x[o:o + L].copy(), x[o + L:o + 2 * L].copy()
        m = np.minimum(pc, pd)
        if np.any(m > OVERLAP_TOL):
            pc, pd = pc - m, pd - m  # net preserved; SoC only rises when eta < 1
        pc[pc < 1e-10] = 0.0
        pd[pd < 1e-10] = 0.0
        out.p_charge[i], out.p_discharge[i] = pc, pd
        out.soc[i] = _rebuild_soc(u, soc_start[i], pc, pd, dt)
        if u.ddu is not None:
            dpath[i] = discomfort_path(u, discomfort_states[i].memory_mean, pd, out.soc[i, 1:], T_day, slot_offset)
    net = np.zeros((G, L))
    for i in range(U):
        net[groups[i]] += out.p_discharge[i] - out.p_charge[i]
    curtail = np.clip(-nc - net, 0.0, None)
    curtail = np.minimum(curtail, np.where(np.isinf(load), curtail, np.maximum(load, 0)))
    out.objective = float(curtail.sum() * dt)
    return RedispatchResult(out, curtail, dpath, slack)


# ------------------------------------------------------------ recovery

def recovery_step(unit: GesUnit, soc_rd_prev: float, soc_pd_target: float, nc_share: float,
                  dt: float = 1.0, available: bool = True) -> tuple[float, float]:
    """Rule-based move back toward the pre-dispatch SoC; returns ``(p_charge, p_discharge)``.

    Charging is limited by the grid headroom share ``nc_share`` (MW).
    """
    if not available:
        return 0.0, 0.0
    gap = soc_pd_target - unit.decay(dt) * soc_rd_prev
    if gap > 0:
        need = gap * unit.energy_capacity / (unit.eta_c * dt)
        return float(max(0.0, min(need, unit.p_charge_max, nc_share))), 0.0
    if gap < 0:
        need = -gap * unit.energy_capacity * unit.eta_d / dt
        return 0.0, float(min(need, unit.p_discharge_max))
    return 0.0, 0.0


def greedy_discharge(units: list[GesUnit], socs, deficit: float, available=None, dt: float = 1.0,
                     slot: int = 0) -> np.ndarray:
    """Cover ``deficit`` MW with discharge split in proportion to rated power.

    Each unit is limited by rated power and by the energy above its DIU lower bound.
    """
    U = len(units)
    available = np.ones(U, dtype=bool) if available is None else np.asarray(available, dtype=bool)
    cap = np.zeros(U)
    weight = np.zeros(U)
    for i, u in enumerate(units):
        if not available[i]:
            continue
        room = u.decay(dt) * socs[i] - float(u.diu.lower(slot + 1))
        cap[i] = max(0.0, min(u.p_discharge_max, room * u.energy_capacity * u.eta_d / dt))
        weight[i] = u.p_discharge_max
    out = np.zeros(U)
    remaining = max(0.0, float(deficit))
    live = cap > 1e-12
    while remaining > 1e-12 and np.any(live):
        share = weight * live
        share = share / share.sum() * remaining
        take = np.minimum(share, cap - out)
        out += take
        remaining -= take.sum()
        live = live & (cap - out > 1e-12)
    return out
