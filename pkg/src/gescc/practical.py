"""Practical delivery of a theoretical strategy under sampled behavioral SoC floors."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from gescc.dispatch.coordinate import CallRecord
from gescc.dispatch.units import DispatchSchedule, GesUnit
from gescc.stochastic import ddu_lower_bound_moments, ddu_quantile


@dataclass
class ClipEvent:
    slot: int
    unit: int
    theoretical_soc: float
    bound: float


@dataclass
class PracticalOutcome:
    practical_soc: np.ndarray
    practical_p_charge: np.ndarray
    practical_p_discharge: np.ndarray
    shortfall_energy: np.ndarray  # MWh per call
    shortfall_by_slot: np.ndarray  # MW per slot (summed over units)
    clip_events: list[ClipEvent] = field(default_factory=list)

    def to_csv(self, path, units=None, offset: int = 0) -> None:
        write_clip_events(path, self.clip_events, units, offset)


def write_clip_events(path, events, units=None, offset: int = 0, year=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((["year"] if year is not None else []) + ["slot", "unit", "theoretical_soc", "bound"])
        for e in events:
            name = units[e.unit].name if units is not None else e.unit
            w.writerow(([year] if year is not None else [])
                       + [e.slot + offset, name, repr(e.theoretical_soc), repr(e.bound)])


def _windows(calls, bounds):
    if calls is not None:
        return [(c.t_s, c.t_e) for c in calls]
    live = np.any(~np.isnan(bounds), axis=0)
    out = []
    t, n = 0, len(live)
    while t < n:
        if live[t]:
            s = t
            while t + 1 < n and live[t + 1]:
                t += 1
            out.append((s, t))
        t += 1
    return out


def practical_bounds(theoretical: DispatchSchedule, calls: list[CallRecord], units: list[GesUnit],
                     seed, cm_price: float = 2000.0, slot_offset: int = 0) -> np.ndarray:
    """Sampled practical SoC floors ``(units, n)``; NaN outside calls or for units without DDU.

    One latent draw per (call, unit) is mapped through every slot's inverse
    CDF, so the floor within a call moves coherently with the discomfort path.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    U, n = theoretical.p_charge.shape
    out = np.full((U, n), np.nan)
    for call in calls:
        draws = rng.random(U)  # always consume U draws so streams align across strategies
        sl = slice(call.t_s, call.t_e + 1)
        slots = slot_offset + 1 + np.arange(call.t_s, call.t_e + 1)
        for i, u in enumerate(units):
            if u.ddu is None:
                continue
            mu, sigma, radius = ddu_lower_bound_moments(u.diu.lower(slots), u.diu.baseline(slots),
                                                        cm_price, call.discomfort[i], u.ddu)
            out[i, sl] = ddu_quantile(mu, sigma, radius, u.ddu.family, draws[i])
    return out


def apply_bounds(theoretical: DispatchSchedule, bounds, units: list[GesUnit],
                 calls: list[CallRecord] | None = None) -> PracticalOutcome:
    """Deliver the theoretical strategy but never discharge below the practical floor.

    Within a call the practical SoC starts from the theoretical SoC at call
    start; a slot's discharge is reduced just enough to end the slot on or
    above the floor. Charging is left as scheduled.
    """
    bounds = np.asarray(bounds, dtype=float)
    dt = theoretical.dt
    pc = theoretical.p_charge.copy()
    pdis = theoretical.p_discharge.copy()
    soc = theoretical.soc.copy()
    windows = _windows(calls, bounds)
    shortfall = np.zeros(len(windows))
    by_slot = np.zeros(theoretical.n_slots)
    events: list[ClipEvent] = []
    for w, (ts, te) in enumerate(windows):
        for i, u in enumerate(units):
            b = bounds[i, ts:te + 1]
            if np.all(np.isnan(b)):
                continue
            s = theoretical.soc[i, ts]
            a = u.decay(dt)
            for j, t in enumerate(range(ts, te + 1)):
                nxt = theoretical.soc[i, t + 1] if s == theoretical.soc[i, t] else u.step_soc(s, pc[i, t], pdis[i, t], dt)
                floor = b[j]
                if not np.isnan(floor) and nxt < floor - 1e-12 and pdis[i, t] > 0:
                    events.append(ClipEvent(t, i, float(theoretical.soc[i, t + 1]), float(floor)))
                    # largest discharge keeping the slot end at or above the floor
                    room = a * s + u.eta_c * pc[i, t] * dt / u.energy_capacity - floor
                    new_pd = min(pdis[i, t], max(0.0, room * u.energy_capacity * u.eta_d / dt))
                    cut = pdis[i, t] - new_pd
                    shortfall[w] += cut * dt
                    by_slot[t] += cut
                    pdis[i, t] = new_pd
                    nxt = u.step_soc(s, pc[i, t], new_pd, dt)
                soc[i, t + 1] = nxt
                s = nxt
    return PracticalOutcome(soc, pc, pdis, shortfall, by_slot, events)
