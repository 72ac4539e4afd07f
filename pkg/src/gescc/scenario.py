"""Exogenous time series and system composition for the adequacy simulation.

A :class:`ScenarioSet` holds aligned per-bus load and renewable series plus the
energy-market price. Scenarios come from a CSV file (:func:`load_csv`) or from
the parametric generator (:func:`synthesize`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from gescc.errors import GapError, ParameterError, SchemaError, ValidationError

HOURS_PER_YEAR = 8760.0


@dataclass(frozen=True)
class GeneratorSpec:
    capacity: float
    forced_outage_rate: float = 0.05
    mttr: float = 24.0

    def __post_init__(self):
        if not self.capacity > 0:
            raise ParameterError(f"generator capacity must be > 0, got {self.capacity}")
        if not 0 <= self.forced_outage_rate < 1:
            raise ParameterError(
                f"forced outage rate must be in [0, 1), got {self.forced_outage_rate}"
            )
        if not self.mttr > 0:
            raise ParameterError(f"mttr must be > 0, got {self.mttr}")


@dataclass
class BusSpec:
    id: int
    kind: str = "PV"
    conventional_units: list[GeneratorSpec] = field(default_factory=list)
    ges_units: list[str] = field(default_factory=list)


@dataclass
class ScenarioSet:
    """Hourly (or ``dt_hours``) substrate of the simulation.

    ``load`` and ``renewable`` have shape ``(n_buses, n_slots)``; ``price_em``
    has shape ``(n_slots,)``.
    """

    horizon_hours: float
    load: np.ndarray
    renewable: np.ndarray
    price_em: np.ndarray
    buses: list[BusSpec]
    dt_hours: float = 1.0
    start_timestamp: pd.Timestamp = field(
        default_factory=lambda: pd.Timestamp("2020-01-01T00:00:00Z")
    )

    @property
    def n_slots(self) -> int:
        return int(self.price_em.shape[0])

    @property
    def slots_per_day(self) -> int:
        return int(round(24.0 / self.dt_hours))

    @property
    def system_load(self) -> np.ndarray:
        return self.load.sum(axis=0)

    @property
    def system_renewable(self) -> np.ndarray:
        return self.renewable.sum(axis=0)

    @property
    def generators(self) -> list[GeneratorSpec]:
        return [g for b in self.buses for g in b.conventional_units]

    def generator_buses(self) -> np.ndarray:
        return np.array(
            [i for i, b in enumerate(self.buses) for _ in b.conventional_units], dtype=int
        )

    def with_buses(self, buses: list[BusSpec]) -> "ScenarioSet":
        return ScenarioSet(
            self.horizon_hours, self.load, self.renewable, self.price_em,
            buses, self.dt_hours, self.start_timestamp,
        )

    def scaled(self, load_factor: float = 1.0, renewable_factor: float = 1.0) -> "ScenarioSet":
        return ScenarioSet(
            self.horizon_hours, self.load * load_factor, self.renewable * renewable_factor,
            self.price_em, self.buses, self.dt_hours, self.start_timestamp,
        )

    def year_chunks(self) -> list[tuple[int, int]]:
        """Split the horizon into (start, stop) slot ranges of about one year."""
        n_years = max(1, int(round(self.horizon_hours / HOURS_PER_YEAR)))
        edges = np.linspace(0, self.n_slots, n_years + 1).round().astype(int)
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def summary(self) -> dict:
        load = self.system_load
        ren = self.system_renewable
        return {
            "horizon_hours": float(self.horizon_hours),
            "dt_hours": float(self.dt_hours),
            "n_slots": self.n_slots,
            "n_buses": len(self.buses),
            "start_timestamp": self.start_timestamp.isoformat(),
            "peak_load_mw": float(load.max()),
            "mean_load_mw": float(load.mean()),
            "renewable_rated_mw": float(ren.max()),
            "renewable_share": float(ren.sum() / load.sum()) if load.sum() > 0 else 0.0,
            "price_mean": float(self.price_em.mean()),
            "conventional_capacity_mw": float(sum(g.capacity for g in self.generators)),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


@dataclass
class Finding:
    kind: str
    message: str
    index: int | None = None


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def __len__(self):
        return len(self.findings)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "findings": [
                {"kind": f.kind, "message": f.message, "index": f.index} for f in self.findings
            ],
        }


def validate(s: ScenarioSet) -> ValidationReport:
    """List every invariant violation of ``s``. Never raises."""
    report = ValidationReport()
    add = report.findings.append
    n = s.price_em.shape[0]
    expected = int(round(s.horizon_hours / s.dt_hours))
    for name, arr in (("load", s.load), ("renewable", s.renewable)):
        if arr.ndim != 2:
            add(Finding("shape", f"{name} must be 2-D (buses, slots), got ndim={arr.ndim}"))
            continue
        if arr.shape[1] != n or arr.shape[1] != expected:
            add(Finding(
                "length",
                f"{name} has {arr.shape[1]} slots, price has {n}, horizon implies {expected}",
            ))
        if arr.shape[0] != len(s.buses):
            add(Finding("bus", f"{name} references {arr.shape[0]} buses, {len(s.buses)} defined"))
        bad = np.argwhere(~np.isfinite(arr))
        for _, j in bad[:10]:
            add(Finding("missing", f"{name} is not finite at slot {j}", int(j)))
        neg = np.argwhere(arr < 0)
        for _, j in neg[:10]:
            add(Finding("negative", f"{name} is negative at slot {j}", int(j)))
    if n != expected:
        add(Finding("length", f"price has {n} slots, horizon implies {expected}"))
    for j in np.flatnonzero(~np.isfinite(s.price_em))[:10]:
        add(Finding("missing", f"price is not finite at slot {j}", int(j)))
    ids = [b.id for b in s.buses]
    if len(set(ids)) != len(ids):
        add(Finding("bus", f"bus ids are not unique: {ids}"))
    return report


# ---------------------------------------------------------------- CSV input

@dataclass(frozen=True)
class ColumnMap:
    timestamp: str = "timestamp"
    load: str = "load_mw"
    wind: str = "wind_mw"
    solar: str = "solar_mw"
    price: str = "price_per_mwh"


def _split(system: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    return np.outer(w / w.sum(), system)


def load_csv(
    path,
    schema: ColumnMap = ColumnMap(),
    dt_hours: float = 1.0,
    buses: list[BusSpec] | None = None,
    bus_weights: Sequence[float] | None = None,
) -> ScenarioSet:
    """Read a scenario CSV and resample it to ``dt_hours`` by mean aggregation."""
    df = pd.read_csv(path)
    cols = [schema.timestamp, schema.load, schema.wind, schema.solar, schema.price]
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}")

    ts = pd.to_datetime(df[schema.timestamp], utc=True)
    for col in (schema.load, schema.wind, schema.solar, schema.price):
        values = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise ValidationError(f"{col}: missing or non-numeric value at row {bad[0]}", row=int(bad[0]))
        if col != schema.price:
            neg = np.flatnonzero(values < 0)
            if neg.size:
                raise ValidationError(f"{col}: negative value at row {neg[0]}", row=int(neg[0]))

    if len(ts) < 1:
        raise SchemaError(f"{path}: no data rows")
    step_h = 1.0
    if len(ts) > 1:
        deltas = np.diff((ts - ts.iloc[0]).dt.total_seconds().to_numpy()) / 3600.0
        if np.any(deltas <= 0):
            i = int(np.flatnonzero(deltas <= 0)[0]) + 1
            raise GapError(f"timestamps not strictly increasing at row {i}", row=i)
        step_h = float(np.median(deltas))
        off = np.flatnonzero(~np.isclose(deltas, step_h))
        if off.size:
            i = int(off[0]) + 1
            raise GapError(f"timestamp gap of {deltas[off[0]]} h at row {i} (step {step_h} h)", row=i)

    ratio = dt_hours / step_h
    k = int(round(ratio))
    if k < 1 or not np.isclose(ratio, k):
        raise SchemaError(f"cannot resample {step_h} h data to dt={dt_hours} h")
    n_out = len(df) // k
    if n_out == 0:
        raise SchemaError(f"{path}: fewer rows than one {dt_hours} h slot")

    def agg(col):
        v = df[col].to_numpy(dtype=float)[: n_out * k]
        return v.reshape(n_out, k).mean(axis=1)

    load = agg(schema.load)
    ren = agg(schema.wind) + agg(schema.solar)
    price = agg(schema.price)

    if buses is None:
        buses = [BusSpec(id=0)]
    weights = bus_weights if bus_weights is not None else [1.0] * len(buses)
    s = ScenarioSet(
        horizon_hours=n_out * dt_hours,
        load=_split(load, weights),
        renewable=_split(ren, weights),
        price_em=price,
        buses=buses,
        dt_hours=dt_hours,
        start_timestamp=ts.iloc[0],
    )
    report = validate(s)
    if not report.ok:
        f = report.findings[0]
        raise ValidationError(f.message, row=f.index)
    return s


def write_csv(s: ScenarioSet, path, schema: ColumnMap = ColumnMap()) -> None:
    """Write the system-level series in the CSV input format (solar column zero)."""
    ts = s.start_timestamp + pd.to_timedelta(np.arange(s.n_slots) * s.dt_hours, unit="h")
    pd.DataFrame({
        schema.timestamp: ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
        schema.load: s.system_load,
        schema.wind: s.system_renewable,
        schema.solar: np.zeros(s.n_slots),
        schema.price: s.price_em,
    }).to_csv(path, index=False)


# ------------------------------------------------------------ synthesis

@dataclass(frozen=True)
class SynthSpec:
    peak_load_mw: float = 1000.0
    penetration: float = 0.3
    price_mean: float = 60.0
    price_amplitude: float = 25.0
    years: int = 1
    noise: float = 0.05
    daily_amplitude: float = 0.15
    seasonal_amplitude: float = 0.12
    wind_share: float = 0.5
    dt_hours: float = 1.0
    start: str = "2020-01-01T00:00:00Z"


def synthesize(spec: SynthSpec, seed: int, buses: list[BusSpec] | None = None,
               bus_weights: Sequence[float] | None = None) -> ScenarioSet:
    """Sinusoidal load/renewable/price model with bounded uniform noise.

    Load peaks in the evening and in winter; solar follows a clipped daytime
    half-sine, wind a slow seasonal wave. Renewables are scaled so their
    energy equals ``penetration`` times load energy.
    """
    if not spec.peak_load_mw > 0:
        raise ParameterError(f"peak load must be > 0, got {spec.peak_load_mw}")
    if spec.penetration < 0:
        raise ParameterError(f"penetration must be >= 0, got {spec.penetration}")
    if spec.years < 1:
        raise ParameterError(f"years must be >= 1, got {spec.years}")
    rng = np.random.default_rng(seed)
    n = int(round(spec.years * HOURS_PER_YEAR / spec.dt_hours))
    hours = np.arange(n) * spec.dt_hours
    hod = hours % 24.0
    doy = hours / 24.0

    def noise(size):
        return spec.noise * rng.uniform(-1.0, 1.0, size)

    daily = np.sin(2 * np.pi * (hod - 12.0) / 24.0)  # max at 18h
    seasonal = np.cos(2 * np.pi * doy / 365.0)  # max in January
    shape = 1.0 + spec.daily_amplitude * daily + spec.seasonal_amplitude * seasonal + noise(n)
    load = shape * spec.peak_load_mw / shape.max()

    solar = np.clip(np.sin(np.pi * (hod - 6.0) / 12.0), 0.0, None) * (
        1.0 - 0.3 * seasonal
    ) * np.clip(1.0 + noise(n), 0.0, None)
    wind = np.clip(0.5 + 0.25 * seasonal + 0.2 * np.sin(2 * np.pi * doy / 3.7) + noise(n), 0.0, None)
    solar_e, wind_e = solar.sum(), wind.sum()
    target = spec.penetration * load.sum()
    ren = np.zeros(n)
    if target > 0:
        ws = spec.wind_share
        if solar_e > 0:
            ren += (1 - ws) * target * solar / solar_e
        if wind_e > 0:
            ren += ws * target * wind / wind_e

    price = spec.price_mean + spec.price_amplitude * daily + spec.price_amplitude * noise(n)

    if buses is None:
        buses = [BusSpec(id=0)]
    weights = bus_weights if bus_weights is not None else [1.0] * len(buses)
    return ScenarioSet(
        horizon_hours=n * spec.dt_hours,
        load=_split(load, weights),
        renewable=_split(ren, weights),
        price_em=price,
        buses=buses,
        dt_hours=spec.dt_hours,
        start_timestamp=pd.Timestamp(spec.start),
    )


def flat_scenario(load_mw: float, hours: int = 8760, renewable_mw: float = 0.0,
                  price: float = 50.0, generators: list[GeneratorSpec] | None = None) -> ScenarioSet:
    """Constant single-bus scenario, handy for analytic checks."""
    return ScenarioSet(
        horizon_hours=float(hours),
        load=np.full((1, hours), float(load_mw)),
        renewable=np.full((1, hours), float(renewable_mw)),
        price_em=np.full(hours, float(price)),
        buses=[BusSpec(id=0, conventional_units=list(generators or []))],
    )
