"""Sequencing of pre-dispatch, emergency re-dispatch and recovery over a horizon."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from gescc.dispatch.stages import discomfort_path, greedy_discharge, re_dispatch, recovery_step
from gescc.dispatch.units import DispatchSchedule, GesUnit, Regime
from gescc.drcc import ChanceSpec
from gescc.stochastic import DiscomfortState

DELTA_TOL = 1e-6


class Method(str, Enum):
    FIXED = "M1-fixed"
    GREEDY = "M2-greedy"
    REDISPATCH = "M3-redispatch"
    RISK_AVERSE = "M4-risk-averse"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        for m in cls:
            if value in (m.value, m.value.split("-")[0], m.name):
                return m
        raise ValueError(f"unknown dispatch method {value!r}; expected one of {[m.value for m in cls]}")


@dataclass
class CallRecord:
    k: int
    t_s: int
    t_e: int
    memory: np.ndarray  # per unit, mean of past end-of-call discomfort at call start
    discomfort: np.ndarray  # (units, L) theoretical D along the call
    d_end: np.ndarray  # per unit

    @property
    def length(self) -> int:
        return self.t_e - self.t_s + 1


@dataclass
class SystemSlotState:
    nc: float
    nc_by_bus: np.ndarray
    delta_soc: np.ndarray
    regime: Regime


@dataclass
class CoordinationResult:
    schedule: DispatchSchedule
    regime: np.ndarray  # int8 per slot
    calls: list[CallRecord] = field(default_factory=list)
    curtailment: np.ndarray | None = None  # (groups, n) MW

    def slot_state(self, t: int, nc, pd: DispatchSchedule) -> SystemSlotState:
        nc = np.atleast_2d(nc)
        return SystemSlotState(float(nc[:, t].sum()), nc[:, t].copy(),
                               np.abs(self.schedule.soc[:, t] - pd.soc[:, t]), Regime(int(self.regime[t])))


def classify(nc_t, delta_soc) -> Regime:
    """Regime trigger for one slot from net capacity and SoC deviation."""
    if np.any(np.asarray(nc_t) < 0):
        return Regime.EMERGENCY
    if np.any(np.asarray(delta_soc) > DELTA_TOL):
        return Regime.RECOVERY
    return Regime.NORMAL


def _group_sum(values, groups, G):
    out = np.zeros((G,) + values.shape[1:])
    np.add.at(out, groups, values)
    return out


def coordinate(units: list[GesUnit], pd: DispatchSchedule, nc, method="M4-risk-averse",
               chance: ChanceSpec | None = None, load=None, available=None, groups=None,
               states: list[DiscomfortState] | None = None, cm_price: float = 2000.0,
               T_day: int = 24, slot_offset: int = 0, max_window: int = 72) -> CoordinationResult:
    """Run the coordinated dispatch over ``pd.n_slots`` slots.

    ``nc`` is system (``(n,)``) or per-group (``(G, n)``) net capacity before
    storage. The RD trajectory starts on the PD trajectory. Discomfort
    states are updated in place at the end of every call.
    """
    method = Method.parse(method)
    nc = np.atleast_2d(np.asarray(nc, dtype=float))
    G, n = nc.shape
    U = len(units)
    dt = pd.dt
    groups = np.zeros(U, dtype=int) if groups is None else np.asarray(groups, dtype=int)
    available = np.ones((U, n), dtype=bool) if available is None else np.asarray(available, dtype=bool)
    load = None if load is None else np.atleast_2d(np.asarray(load, dtype=float))
    states = states if states is not None else [DiscomfortState() for _ in units]
    chance_rd = chance if method is Method.RISK_AVERSE else None
    if method is Method.RISK_AVERSE and chance_rd is None:
        chance_rd = ChanceSpec()

    rd = DispatchSchedule.empty(U, n, dt, "RD")
    rd.soc[:, 0] = pd.soc[:, 0]
    regime = np.zeros(n, dtype=np.int8)
    calls: list[CallRecord] = []

    deficit = np.any(nc < 0, axis=0)
    pd_net_g = _group_sum(pd.p_discharge - pd.p_charge, groups, G) if U else np.zeros((G, n))
    overflow = np.any(nc + pd_net_g < -1e-9, axis=0)
    event = deficit | overflow | ~np.all(available, axis=0)
    event_idx = np.flatnonzero(event)
    pcmax = np.array([u.p_charge_max for u in units])

    t = 0
    while t < n:
        if not event[t] and np.array_equal(rd.soc[:, t], pd.soc[:, t]):
            k = np.searchsorted(event_idx, t)
            nxt = int(event_idx[k]) if k < len(event_idx) else n
            rd.p_charge[:, t:nxt] = pd.p_charge[:, t:nxt]
            rd.p_discharge[:, t:nxt] = pd.p_discharge[:, t:nxt]
            rd.soc[:, t + 1:nxt + 1] = pd.soc[:, t + 1:nxt + 1]
            t = nxt
            continue

        if deficit[t]:
            te = t
            while te + 1 < n and deficit[te + 1] and te + 1 - t < max_window:
                te += 1
            L = te - t + 1
            memory = np.array([s.memory_mean for s in states])
            if method in (Method.REDISPATCH, Method.RISK_AVERSE):
                res = re_dispatch(units, nc[:, t:te + 1], rd.soc[:, t], states, chance_rd,
                                  load=None if load is None else load[:, t:te + 1],
                                  available=available[:, t:te + 1], groups=groups, cm_price=cm_price,
                                  T_day=T_day, dt=dt, slot_offset=slot_offset + t)
                rd.p_charge[:, t:te + 1] = res.schedule.p_charge
                rd.p_discharge[:, t:te + 1] = res.schedule.p_discharge
                rd.soc[:, t:te + 2] = res.schedule.soc
                dpath = res.discomfort
                regime[t:te + 1] = Regime.EMERGENCY
            else:
                for j in range(t, te + 1):
                    if method is Method.GREEDY:
                        out = np.zeros(U)
                        for g in range(G):
                            mem = np.flatnonzero(groups == g)
                            if nc[g, j] < 0 and len(mem):
                                out[mem] = greedy_discharge([units[i] for i in mem], rd.soc[mem, j], -nc[g, j],
                                                            available[mem, j], dt, slot_offset + j)
                        rd.p_discharge[:, j] = out
                        for i, u in enumerate(units):
                            rd.soc[i, j + 1] = u.step_soc(rd.soc[i, j], 0.0, out[i], dt)
                    else:
                        _normal_slot(units, pd, rd, nc, j, groups, G, available, pcmax)
                    regime[j] = Regime.EMERGENCY
                dpath = np.zeros((U, L))
                for i, u in enumerate(units):
                    if u.ddu is not None:
                        dpath[i] = discomfort_path(u, memory[i], rd.p_discharge[i, t:te + 1],
                                                   rd.soc[i, t + 1:te + 2], T_day, slot_offset + t)
            d_end = dpath[:, -1].copy()
            for i, u in enumerate(units):
                if u.ddu is not None:
                    states[i].close_call(d_end[i])
            calls.append(CallRecord(len(calls) + 1, t, te, memory, dpath, d_end))
            t = te + 1
            continue

        delta = np.abs(rd.soc[:, t] - pd.soc[:, t])
        _normal_slot(units, pd, rd, nc, t, groups, G, available, pcmax)
        regime[t] = classify(nc[:, t], delta)
        t += 1

    net = _group_sum(rd.p_discharge - rd.p_charge, groups, G) if U else np.zeros((G, n))
    curtail = np.clip(-nc - net, 0.0, None)
    return CoordinationResult(rd, regime, calls, curtail)


def _normal_slot(units, pd, rd, nc, t, groups, G, available, pcmax):
    """Follow PD where synchronized, otherwise step the recovery rule."""
    dt = rd.dt
    U = len(units)
    pc = np.zeros(U)
    pdis = np.zeros(U)
    synced = rd.soc[:, t] == pd.soc[:, t]
    for i, u in enumerate(units):
        if not available[i, t]:
            continue
        if synced[i]:
            pc[i], pdis[i] = pd.p_charge[i, t], pd.p_discharge[i, t]
        else:
            pc[i], pdis[i] = recovery_step(u, rd.soc[i, t], pd.soc[i, t + 1], np.inf, dt)
    # charging may not push any group below zero net capacity
    for g in range(G):
        mem = np.flatnonzero(groups == g)
        headroom = max(0.0, nc[g, t] + pdis[mem].sum())
        want = pc[mem].sum()
        if want > headroom + 1e-12:
            phi = pcmax[mem] / pcmax[mem].sum() if pcmax[mem].sum() > 0 else np.zeros(len(mem))
            share = phi * headroom
            for i, s in zip(mem, share):
                if synced[i]:
                    pc[i] = min(pc[i], s)
                else:
                    pc[i], _ = recovery_step(units[i], rd.soc[i, t], pd.soc[i, t + 1], s, dt, bool(available[i, t]))
    for i, u in enumerate(units):
        rd.p_charge[i, t], rd.p_discharge[i, t] = pc[i], pdis[i]
        nxt = u.step_soc(rd.soc[i, t], pc[i], pdis[i], dt)
        if abs(nxt - pd.soc[i, t + 1]) <= 1e-12:
            nxt = pd.soc[i, t + 1]
        rd.soc[i, t + 1] = nxt
