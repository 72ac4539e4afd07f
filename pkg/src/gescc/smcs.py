"""Sequential Monte Carlo adequacy engine.

Each simulated year replays one year-long chunk of the scenario (cyclically)
with fresh outage and behavioral draws. Years are independent: every year
starts on the pre-dispatch trajectory with empty discomfort memory, and its
random streams are keyed by ``(seed, year, stream, component)`` so results do
not depend on how years are spread across workers.
"""
from __future__ import annotations

import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from gescc.dispatch import DispatchSchedule, GesUnit, Method, coordinate, hold_full, peak_shave, pre_dispatch
from gescc.drcc import ChanceSpec
from gescc.errors import ParameterError
from gescc.practical import ClipEvent, apply_bounds, practical_bounds
from gescc.scenario import HOURS_PER_YEAR, GeneratorSpec, ScenarioSet
from gescc.stochastic import sample_availability

STREAM_CONV, STREAM_GES, STREAM_EXTRA, STREAM_DDU = 1, 2, 3, 4
REPLACE_AT = 0.8


# ------------------------------------------------------------ small pieces

@dataclass(frozen=True)
class LossEvent:
    year: int
    start: int
    duration: int
    unserved_mwh: float
    cause: str  # "DIU" or "DDU"


@dataclass(frozen=True)
class DegradationState:
    remaining_capacity_fraction: float = 1.0
    cumulative_discharge: float = 0.0
    replacements: int = 0


def degrade(state: DegradationState, discharged_mwh: float, energy_capacity: float,
            fade_coeff: float = 0.2 / 3000) -> DegradationState:
    """Linear capacity fade with replacement once the fraction reaches 80%.

    Fade beyond the replacement point carries over to the new unit.
    """
    if discharged_mwh < 0:
        raise ParameterError("discharged energy must be >= 0")
    frac = state.remaining_capacity_fraction - fade_coeff * discharged_mwh / energy_capacity
    reps = state.replacements
    while frac <= REPLACE_AT + 1e-9:
        reps += 1
        frac = 1.0 - (REPLACE_AT - frac)
    return DegradationState(frac, state.cumulative_discharge + discharged_mwh, reps)


def cov(annual_batches) -> float:
    """Standard error of the mean over the mean (0 for a zero mean, 1 for a single batch)."""
    x = np.asarray(annual_batches, dtype=float)
    if x.size < 2:
        return 1.0
    m = x.mean()
    if m == 0:
        return 0.0
    return float(x.std(ddof=1) / (m * math.sqrt(x.size)))


@dataclass
class EconomicsTally:
    em_revenue: float = 0.0
    cm_revenue: float = 0.0
    cm_penalty: float = 0.0

    @property
    def total_profit(self) -> float:
        return self.em_revenue + self.cm_revenue - self.cm_penalty

    def to_dict(self) -> dict:
        return {"em_revenue": self.em_revenue, "cm_revenue": self.cm_revenue,
                "cm_penalty": self.cm_penalty, "total_profit": self.total_profit}


@dataclass
class AdequacyLedger:
    """Running EENS estimators; ``eens_*`` are annualized (MWh/yr)."""

    unserved_theoretical_mwh: float = 0.0
    unserved_practical_mwh: float = 0.0
    hours: float = 0.0
    annual_batches: list[float] = field(default_factory=list)  # practical, MWh/yr
    annual_theoretical: list[float] = field(default_factory=list)
    shortfall_mwh: list[float] = field(default_factory=list)  # per year, annualized
    em_revenue: list[float] = field(default_factory=list)  # per year, annualized
    calls: list[int] = field(default_factory=list)
    loss_events: list[LossEvent] = field(default_factory=list)
    economics: EconomicsTally | None = None
    converged: bool = False

    @property
    def years(self) -> int:
        return len(self.annual_batches)

    @property
    def eens_theoretical(self) -> float:
        return HOURS_PER_YEAR * self.unserved_theoretical_mwh / self.hours if self.hours else self.unserved_theoretical_mwh

    @property
    def eens_practical(self) -> float:
        return HOURS_PER_YEAR * self.unserved_practical_mwh / self.hours if self.hours else self.unserved_practical_mwh

    @property
    def cov(self) -> float:
        return cov(self.annual_batches)

    def standard_error(self, practical: bool = True) -> float:
        x = np.asarray(self.annual_batches if practical else self.annual_theoretical)
        return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("inf")

    def batches(self, practical: bool = True) -> np.ndarray:
        return np.asarray(self.annual_batches if practical else self.annual_theoretical, dtype=float)

    def to_dict(self) -> dict:
        return {
            "eens_theoretical": self.eens_theoretical,
            "eens_practical": self.eens_practical,
            "cov": self.cov,
            "years": self.years,
            "converged": self.converged,
            "annual_practical": list(self.annual_batches),
            "annual_theoretical": list(self.annual_theoretical),
            "shortfall_mwh": list(self.shortfall_mwh),
            "em_revenue": list(self.em_revenue),
            "calls": list(self.calls),
            "loss_events": len(self.loss_events),
            "economics": self.economics.to_dict() if self.economics else None,
        }


def update_eens(ledger: AdequacyLedger, unserved_mw, cause: str = "DIU", dt: float = 1.0) -> AdequacyLedger:
    """Accumulate unserved energy. DIU shortfalls count for both estimators, DDU ones for practical only."""
    e = float(np.sum(np.asarray(unserved_mw, dtype=float)) * dt)
    if cause == "DIU":
        ledger.unserved_theoretical_mwh += e
        ledger.unserved_practical_mwh += e
    elif cause == "DDU":
        ledger.unserved_practical_mwh += e
    else:
        raise ParameterError(f"cause must be 'DIU' or 'DDU', got {cause!r}")
    return ledger


# ------------------------------------------------------------ options

@dataclass(frozen=True)
class SystemVariant:
    """Modifications applied on top of the scenario (used by capacity-credit searches)."""

    load_scale: float = 1.0
    conv_scale: float = 1.0
    extra_generators: tuple[GeneratorSpec, ...] = ()


@dataclass(frozen=True)
class SmcsOptions:
    max_years: int = 50
    min_years: int = 10
    cov_target: float = 0.05
    seed: int = 0
    with_ges: bool = True
    method: str = "M4-risk-averse"
    balance: str = "system"  # or "bus"
    cm_price: float = 2000.0
    years: int | None = None  # fixed number of years, no convergence stop
    workers: int = 1
    archive_year: int | None = 0
    max_window: int = 72
    peak_day_fraction: float = 0.9

    def __post_init__(self):
        if self.max_years < 1 or self.min_years < 1:
            raise ParameterError("max_years and min_years must be >= 1")
        if not self.cov_target > 0:
            raise ParameterError("cov_target must be > 0")
        if self.balance not in ("system", "bus"):
            raise ParameterError("balance must be 'system' or 'bus'")
        Method.parse(self.method)


@dataclass
class YearResult:
    year: int
    hours: float
    unserved_theoretical_mwh: float
    unserved_practical_mwh: float
    shortfall_mwh: float
    em_revenue: float
    discharge_mwh: np.ndarray
    n_calls: int
    loss_events: list[LossEvent]
    clip_events: list[ClipEvent]
    archive: dict | None = None


@dataclass
class SmcsResult:
    ledger: AdequacyLedger
    years: list[YearResult]
    degradation: list[list[DegradationState]]  # per unit, per year
    convergence: list[tuple[int, float, float, float]]  # (year, eens_T, eens_P, cov)
    units: list[GesUnit]
    pre_dispatch: DispatchSchedule | None = None

    @property
    def archive(self) -> dict | None:
        for y in self.years:
            if y.archive is not None:
                return y.archive
        return None


# ------------------------------------------------------------ pre-dispatch cache

def build_pre_dispatch(scenario: ScenarioSet, units: list[GesUnit], method="M4-risk-averse",
                       peak_day_fraction: float = 0.9) -> DispatchSchedule:
    """Pre-dispatch trajectories for every unit over the whole scenario, day by day."""
    method = Method.parse(method)
    n, T, dt = scenario.n_slots, scenario.slots_per_day, scenario.dt_hours
    U = len(units)
    out = DispatchSchedule.empty(U, n, dt, "PD")
    if U == 0:
        return out
    days = [(d, min(d + T, n)) for d in range(0, n, T)]
    if method is Method.FIXED:
        net_load = scenario.system_load - scenario.system_renewable
        peaks = np.zeros(n, dtype=bool)
        load = scenario.system_load
        for a, b in scenario.year_chunks():
            thr = peak_day_fraction * load[a:b].max()
            for d, e in days:
                if a <= d < b:
                    peaks[d:e] = load[d:e].max() >= thr
    for d, e in days:
        if method is Method.FIXED and peaks[d]:
            s = peak_shave(units, net_load[d:e], dt, slot_offset=d)
            out.p_charge[:, d:e], out.p_discharge[:, d:e], out.soc[:, d:e + 1] = s.p_charge, s.p_discharge, s.soc
            continue
        for i, u in enumerate(units):
            if method in (Method.FIXED, Method.GREEDY):
                s = hold_full(u, e - d, dt, slot_offset=d)
            else:
                withhold = u.soc_withhold if method is Method.RISK_AVERSE else 0.0
                soc0 = max(float(u.diu.baseline(0)), withhold) if u.soc0 is None else u.soc0
                s = pre_dispatch(u, scenario.price_em[d:e], e - d, soc0, withhold, dt, slot_offset=d)
            out.p_charge[i, d:e], out.p_discharge[i, d:e], out.soc[i, d:e + 1] = s.p_charge[0], s.p_discharge[0], s.soc[0]
    return out


# ------------------------------------------------------------ one year

@dataclass
class _Context:
    scenario: ScenarioSet
    units: list[GesUnit]
    chance: ChanceSpec | None
    options: SmcsOptions
    variant: SystemVariant
    pd: DispatchSchedule


_CTX: _Context | None = None


def _init_worker(ctx: _Context) -> None:
    global _CTX
    _CTX = ctx


def _runs(mask: np.ndarray):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    return list(zip(starts.tolist(), ends.tolist()))


def net_capacity(ctx: _Context, year: int, a: int, b: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-bus net capacity before storage and load for one year chunk."""
    sc, opt, var = ctx.scenario, ctx.options, ctx.variant
    n = b - a
    G = len(sc.buses)
    gens = sc.generators
    cap = np.zeros((G, n))
    if gens:
        tr = sample_availability(gens, n, [opt.seed, year, STREAM_CONV], sc.dt_hours)
        sizes = np.array([g.capacity for g in gens]) * var.conv_scale
        np.add.at(cap, sc.generator_buses(), tr.up * sizes[:, None])
    if var.extra_generators:
        tr = sample_availability(list(var.extra_generators), n, [opt.seed, year, STREAM_EXTRA], sc.dt_hours)
        cap[0] += (tr.up * np.array([g.capacity for g in var.extra_generators])[:, None]).sum(axis=0)
    load = sc.load[:, a:b] * var.load_scale
    nc = cap + sc.renewable[:, a:b] - load
    if opt.balance == "system":
        return nc.sum(axis=0, keepdims=True), load.sum(axis=0, keepdims=True)
    return nc, load


def simulate_year(ctx: _Context, year: int) -> YearResult:
    sc, opt = ctx.scenario, ctx.options
    chunks = sc.year_chunks()
    a, b = chunks[year % len(chunks)]
    n, dt = b - a, sc.dt_hours
    hours = n * dt
    nc, load = net_capacity(ctx, year, a, b)
    units = ctx.units
    keep = opt.archive_year is not None and year == opt.archive_year
    if not units:
        unserved = np.clip(-nc, 0.0, None).sum(axis=0)
        events = [LossEvent(year, s, e - s + 1, float(unserved[s:e + 1].sum() * dt), "DIU")
                  for s, e in _runs(unserved > 0)]
        e = float(unserved.sum() * dt)
        arch = {"nc": nc.sum(axis=0), "unserved": unserved, "offset": a} if keep else None
        return YearResult(year, hours, e, e, 0.0, 0.0, np.zeros(0), 0, events, [], arch)

    groups = np.array([u.bus for u in units], dtype=int) if opt.balance == "bus" else np.zeros(len(units), int)
    avail = sample_availability(units, n, [opt.seed, year, STREAM_GES], dt).up
    pd = ctx.pd.slice(a, b)
    res = coordinate(units, pd, nc, opt.method, ctx.chance, load=load, available=avail, groups=groups,
                     cm_price=opt.cm_price, T_day=sc.slots_per_day, slot_offset=a, max_window=opt.max_window)
    rd = res.schedule
    bounds = practical_bounds(rd, res.calls, units, np.random.default_rng([opt.seed, year, STREAM_DDU]),
                              opt.cm_price, slot_offset=a)
    prac = apply_bounds(rd, bounds, units, res.calls)
    G = nc.shape[0]
    net_p = np.zeros((G, n))
    np.add.at(net_p, groups, prac.practical_p_discharge - prac.practical_p_charge)
    unserved_t = res.curtailment.sum(axis=0)
    unserved_p = np.maximum(np.clip(-nc - net_p, 0.0, None).sum(axis=0), unserved_t)
    extra = unserved_p - unserved_t

    events = [LossEvent(year, s + a, e - s + 1, float(unserved_t[s:e + 1].sum() * dt), "DIU")
              for s, e in _runs(unserved_t > 1e-9)]
    for c in res.calls:
        x = float(extra[c.t_s:c.t_e + 1].sum() * dt)
        if x > 1e-9:
            events.append(LossEvent(year, c.t_s + a, c.length, x, "DDU"))
    em = float(np.sum(sc.price_em[a:b] * (pd.p_discharge - pd.p_charge).sum(axis=0)) * dt)
    for e in prac.clip_events:
        e.slot += a
    arch = None
    if keep:
        arch = {"offset": a, "pd": pd, "rd": rd, "regime": res.regime, "bounds": bounds,
                "practical": prac, "nc": nc.sum(axis=0), "unserved_t": unserved_t,
                "unserved_p": unserved_p, "calls": res.calls}
    return YearResult(
        year, hours, float(unserved_t.sum() * dt), float(unserved_p.sum() * dt),
        float(prac.shortfall_energy.sum()), em, rd.p_discharge.sum(axis=1) * dt,
        len(res.calls), events, prac.clip_events, arch,
    )


def _year_task(year: int) -> YearResult:
    return simulate_year(_CTX, year)


# ------------------------------------------------------------ driver

def run_smcs(scenario: ScenarioSet, units: list[GesUnit], chance: ChanceSpec | None = None,
             options: SmcsOptions = SmcsOptions(), variant: SystemVariant = SystemVariant(),
             pd: DispatchSchedule | None = None) -> SmcsResult:
    """Simulate years until the practical-EENS CoV reaches the target (or ``max_years``).

    With ``options.years`` set, exactly that many years are simulated.
    Non-convergence is reported through ``ledger.converged``.
    """
    units = list(units) if options.with_ges else []
    if pd is None or pd.p_charge.shape[0] != len(units):
        pd = build_pre_dispatch(scenario, units, options.method, options.peak_day_fraction)
    ctx = _Context(scenario, units, chance, options, variant, pd)
    fixed = options.years
    limit = fixed if fixed is not None else options.max_years
    workers = max(1, min(int(options.workers or 1), limit))

    ledger = AdequacyLedger()
    years: list[YearResult] = []
    trace = []

    def absorb(r: YearResult) -> bool:
        years.append(r)
        scale = HOURS_PER_YEAR / r.hours
        ledger.unserved_theoretical_mwh += r.unserved_theoretical_mwh
        ledger.unserved_practical_mwh += r.unserved_practical_mwh
        ledger.hours += r.hours
        ledger.annual_theoretical.append(r.unserved_theoretical_mwh * scale)
        ledger.annual_batches.append(r.unserved_practical_mwh * scale)
        ledger.shortfall_mwh.append(r.shortfall_mwh * scale)
        ledger.em_revenue.append(r.em_revenue * scale)
        ledger.calls.append(r.n_calls)
        ledger.loss_events.extend(r.loss_events)
        c = ledger.cov
        trace.append((r.year, ledger.eens_theoretical, ledger.eens_practical, c))
        if fixed is not None:
            return len(years) >= fixed
        done = len(years) >= options.min_years and c <= options.cov_target
        ledger.converged = bool(done)
        return done or len(years) >= options.max_years

    if workers == 1:
        for y in range(limit):
            if absorb(simulate_year(ctx, y)):
                break
    else:
        mpctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(workers, mp_context=mpctx, initializer=_init_worker, initargs=(ctx,)) as pool:
            y0, stop = 0, False
            while not stop and y0 < limit:
                batch = list(range(y0, min(limit, y0 + workers)))
                for r in pool.map(_year_task, batch):
                    if absorb(r):
                        stop = True
                        break
                y0 += len(batch)
    if fixed is not None:
        ledger.converged = ledger.cov <= options.cov_target

    degr: list[list[DegradationState]] = []
    for i, u in enumerate(units):
        st, path = DegradationState(), []
        for r in years:
            st = degrade(st, float(r.discharge_mwh[i]), u.energy_capacity, u.fade_coeff)
            path.append(st)
        degr.append(path)
    return SmcsResult(ledger, years, degr, trace, units, pd)


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def with_options(options: SmcsOptions, **kw) -> SmcsOptions:
    return replace(options, **kw)
