from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from gescc.errors import ParameterError
from gescc.stochastic import DduSpec, DiuBounds


class Regime(IntEnum):
    NORMAL = 0
    EMERGENCY = 1
    RECOVERY = 2


@dataclass(frozen=True)
class GesUnit:
    """One generalized storage resource (battery ``ES`` or virtual ``VES``)."""

    name: str
    energy_capacity: float
    p_charge_max: float
    p_discharge_max: float
    kind: str = "ES"
    bus: int = 0
    eta_c: float = 0.9
    eta_d: float = 0.9
    self_discharge: float = 0.0  # fraction of SoC per hour
    soc_withhold: float = 0.0
    diu: DiuBounds = field(default_factory=lambda: DiuBounds.constant(0.0, 1.0))
    ddu: DduSpec | None = None
    forced_outage_rate: float = 0.0
    mttr: float = 24.0
    soc0: float | None = None
    fade_coeff: float = 0.2 / 3000

    def __post_init__(self):
        if not self.energy_capacity > 0:
            raise ParameterError(f"{self.name}: energy capacity must be > 0")
        if not (0 < self.eta_c <= 1 and 0 < self.eta_d <= 1):
            raise ParameterError(f"{self.name}: efficiencies must lie in (0, 1]")
        if not 0 <= self.soc_withhold < 1:
            raise ParameterError(f"{self.name}: soc_withhold must lie in [0, 1)")
        if self.p_charge_max < 0 or self.p_discharge_max < 0:
            raise ParameterError(f"{self.name}: power limits must be >= 0")
        if not 0 <= self.forced_outage_rate < 1:
            raise ParameterError(f"{self.name}: forced outage rate must lie in [0, 1)")

    @property
    def initial_soc(self) -> float:
        if self.soc0 is not None:
            return float(self.soc0)
        return float(max(self.diu.soc_baseline[0], self.soc_withhold))

    @property
    def duration_h(self) -> float:
        return self.energy_capacity / self.p_discharge_max if self.p_discharge_max else np.inf

    def decay(self, dt: float) -> float:
        return 1.0 - self.self_discharge * dt

    def step_soc(self, soc, pc, pd, dt: float):
        return self.decay(dt) * soc + (self.eta_c * pc - pd / self.eta_d) * dt / self.energy_capacity

    def with_(self, **kw) -> "GesUnit":
        return replace(self, **kw)


@dataclass
class DispatchSchedule:
    """Charge/discharge/SoC trajectories for several units.

    ``soc[:, t]`` is the SoC at the start of slot ``t``; ``soc[:, n]`` is the
    final SoC. Powers are MW held over each slot of ``dt`` hours.
    """

    p_charge: np.ndarray
    p_discharge: np.ndarray
    soc: np.ndarray
    dt: float = 1.0
    stage: str = "PD"
    objective: float | None = None

    @classmethod
    def empty(cls, n_units: int, n: int, dt: float = 1.0, stage: str = "PD") -> "DispatchSchedule":
        return cls(np.zeros((n_units, n)), np.zeros((n_units, n)), np.zeros((n_units, n + 1)), dt, stage)

    @property
    def n_slots(self) -> int:
        return self.p_charge.shape[1]

    def slice(self, a: int, b: int) -> "DispatchSchedule":
        return DispatchSchedule(self.p_charge[:, a:b].copy(), self.p_discharge[:, a:b].copy(),
                                self.soc[:, a:b + 1].copy(), self.dt, self.stage)

    def net(self) -> np.ndarray:
        return self.p_discharge - self.p_charge

    def profit(self, prices) -> float:
        return float(np.sum(np.asarray(prices) * self.net().sum(axis=0)) * self.dt)

    def recurrence_residual(self, units) -> float:
        worst = 0.0
        for i, u in enumerate(units):
            nxt = u.step_soc(self.soc[i, :-1], self.p_charge[i], self.p_discharge[i], self.dt)
            worst = max(worst, float(np.max(np.abs(nxt - self.soc[i, 1:]), initial=0.0)))
        return worst

    def overlap(self) -> float:
        return float(np.max(np.minimum(self.p_charge, self.p_discharge), initial=0.0))

    def to_csv(self, path, units, regime=None, offset: int = 0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "unit", "p_charge", "p_discharge", "soc", "regime"])
            for t in range(self.n_slots):
                reg = Regime(int(regime[t])).name.title() if regime is not None else self.stage
                for i, u in enumerate(units):
                    w.writerow([t + offset, u.name, repr(float(self.p_charge[i, t])),
                                repr(float(self.p_discharge[i, t])), repr(float(self.soc[i, t + 1])), reg])
