"""Run configuration: a YAML document validated by pydantic models."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from gescc.dispatch import GesUnit, Method
from gescc.drcc import ChanceSpec, Family
from gescc.errors import ConfigError
from gescc.scenario import BusSpec, ColumnMap, GeneratorSpec, ScenarioSet, SynthSpec, load_csv, synthesize
from gescc.smcs import SmcsOptions
from gescc.stochastic import DduSpec, DiuBounds

FAMILIES = [f.value for f in Family]
METHODS = [m.value for m in Method]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SynthConfig(_Model):
    seed: int = 7
    peak_load_mw: float = Field(1000.0, gt=0)
    penetration: float = Field(0.3, ge=0)
    years: int = Field(1, ge=1)
    price_mean: float = 60.0
    price_amplitude: float = 25.0
    noise: float = Field(0.05, ge=0)
    daily_amplitude: float = 0.15
    seasonal_amplitude: float = 0.12
    wind_share: float = Field(0.5, ge=0, le=1)


class CsvConfig(_Model):
    path: str
    dt_hours: float = Field(1.0, gt=0)
    timestamp: str = "timestamp"
    load: str = "load_mw"
    wind: str = "wind_mw"
    solar: str = "solar_mw"
    price: str = "price_per_mwh"

    @field_validator("path")
    @classmethod
    def _exists(cls, v: str) -> str:
        if not Path(v).is_file():
            raise ValueError(f"file not found: {v}")
        return v


class FleetConfig(_Model):
    count: int = Field(10, ge=0)
    capacity_mw: float = Field(100.0, gt=0)
    forced_outage_rate: float = Field(0.05, ge=0, lt=1)
    mttr: float = Field(24.0, gt=0)


class ScenarioConfig(_Model):
    synth: Optional[SynthConfig] = None
    csv: Optional[CsvConfig] = None
    generators: FleetConfig = FleetConfig()
    penetration_scale: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.synth is None) == (self.csv is None):
            raise ValueError("exactly one of 'synth' or 'csv' must be given")
        return self


class DduConfig(_Model):
    family: Literal[tuple(FAMILIES)] = "Unimodal"  # type: ignore[valid-type]
    alpha: float = Field(1.0, ge=0)
    beta: float = Field(4.0, ge=0)
    rho: float = Field(0.2, ge=0, le=1)
    lam: float = Field(0.5, ge=0, le=1)
    cv_g: float = Field(0.1, ge=0)
    cv_h: float = Field(0.1, ge=0)
    qg_level: float = Field(0.5, gt=0, lt=1)
    price_ref: float = Field(2000.0, gt=0)


class UnitConfig(_Model):
    name: str
    kind: Literal["ES", "VES"] = "ES"
    power_mw: float = Field(gt=0)
    duration_h: float = Field(4.0, gt=0)
    eta_c: float = Field(0.9, gt=0, le=1)
    eta_d: float = Field(0.9, gt=0, le=1)
    self_discharge: float = Field(0.0, ge=0, lt=1)
    soc_withhold: float = Field(0.2, ge=0, lt=1)
    diu_lower: float = Field(0.0, ge=0, le=1)
    diu_upper: float = Field(1.0, ge=0, le=1)
    ddu: Optional[DduConfig] = None
    forced_outage_rate: float = Field(0.0, ge=0, lt=1)
    mttr: float = Field(24.0, gt=0)
    fade_coeff: float = Field(0.2 / 3000, ge=0)
    bus: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _bounds(self):
        if self.diu_lower > self.diu_upper:
            raise ValueError("diu_lower must not exceed diu_upper")
        return self


class ChanceConfig(_Model):
    epsilon: float = Field(0.05, gt=0, lt=1)
    family: Literal[tuple(FAMILIES)] = "Unimodal"  # type: ignore[valid-type]
    K: Optional[float] = Field(None, gt=0, description="sample count; null means exact moments")
    p: int = Field(2, ge=2)


class DispatchConfig(_Model):
    method: Literal[tuple(METHODS)] = "M4-risk-averse"  # type: ignore[valid-type]
    balance: Literal["system", "bus"] = "system"
    max_window: int = Field(72, ge=1)


class SmcsConfig(_Model):
    max_years: int = Field(50, ge=1)
    min_years: int = Field(10, ge=1)
    cov_target: float = Field(0.05, gt=0)
    years: Optional[int] = Field(None, ge=1)


class CreditConfig(_Model):
    metrics: list[Literal["ECC", "EFC", "ELCC", "EGCS", "ESCS"]] = ["ECC"]
    tolerance: float = Field(0.01, gt=0, lt=1)
    practical: bool = True
    noise_sigmas: float = Field(2.0, ge=0)


class EconomicsConfig(_Model):
    voll: float = Field(10_000.0, ge=0)
    penalty: float = Field(2_000.0, ge=0)
    cm_price: float = Field(2_000.0, ge=0)


class RunConfig(_Model):
    seed: int = 0
    scenario: ScenarioConfig
    units: list[UnitConfig] = []
    chance: ChanceConfig = ChanceConfig()
    dispatch: DispatchConfig = DispatchConfig()
    smcs: SmcsConfig = SmcsConfig()
    credit: CreditConfig = CreditConfig()
    economics: EconomicsConfig = EconomicsConfig()
    sensitivity: dict[str, list] = {}
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _method_needs_ddu(self):
        if self.dispatch.method == Method.RISK_AVERSE.value:
            missing = [u.name for u in self.units if u.kind == "VES" and u.ddu is None]
            if missing:
                raise ValueError(f"method {self.dispatch.method} requires a 'ddu' block on VES units: {missing}")
        names = [u.name for u in self.units]
        if len(set(names)) != len(names):
            raise ValueError("unit names must be unique")
        return self

    # ----------------------------------------------------------- builders

    def build_scenario(self) -> ScenarioSet:
        f = self.scenario.generators
        gens = [GeneratorSpec(f.capacity_mw, f.forced_outage_rate, f.mttr) for _ in range(f.count)]
        n_bus = max([u.bus for u in self.units], default=0) + 1
        buses = [BusSpec(b, conventional_units=gens if b == 0 else []) for b in range(n_bus)]
        if self.scenario.synth is not None:
            s = self.scenario.synth.model_dump()
            seed = s.pop("seed")
            sc = synthesize(SynthSpec(**s), seed, buses=[BusSpec(0, conventional_units=gens)])
            if n_bus > 1:  # split load/renewables evenly; fleet stays on bus 0
                sc = synthesize(SynthSpec(**s), seed, buses=buses)
        else:
            c = self.scenario.csv
            schema = ColumnMap(c.timestamp, c.load, c.wind, c.solar, c.price)
            sc = load_csv(c.path, schema, c.dt_hours, buses=buses)
        if self.scenario.penetration_scale != 1.0:
            sc = sc.scaled(renewable_factor=self.scenario.penetration_scale)
        return sc

    def build_units(self) -> list[GesUnit]:
        out = []
        for u in self.units:
            ddu = None
            if u.ddu is not None:
                ddu = DduSpec(**u.ddu.model_dump())
            out.append(GesUnit(
                u.name, u.power_mw * u.duration_h, u.power_mw, u.power_mw, kind=u.kind, bus=u.bus,
                eta_c=u.eta_c, eta_d=u.eta_d, self_discharge=u.self_discharge,
                soc_withhold=u.soc_withhold, diu=DiuBounds.constant(u.diu_lower, u.diu_upper), ddu=ddu,
                forced_outage_rate=u.forced_outage_rate, mttr=u.mttr, fade_coeff=u.fade_coeff,
            ))
        return out

    def build_chance(self) -> ChanceSpec:
        c = self.chance
        return ChanceSpec(c.epsilon, c.family, math.inf if c.K is None else c.K, c.p)

    def build_options(self, workers: int = 1, with_ges: bool = True) -> SmcsOptions:
        s = self.smcs
        return SmcsOptions(max_years=s.max_years, min_years=s.min_years, cov_target=s.cov_target,
                           seed=self.seed, with_ges=with_ges, method=self.dispatch.method,
                           balance=self.dispatch.balance, cm_price=self.economics.cm_price, years=s.years,
                           workers=workers, max_window=self.dispatch.max_window)

    # ----------------------------------------------------------- serialization

    def canonical(self) -> dict:
        d = self.model_dump(mode="json")
        d.pop("output_dir", None)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def _field_path(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = [f"{_field_path(e)}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines)) from None


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: not valid YAML ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    # relative csv paths are resolved against the config file
    csv = (data.get("scenario") or {}).get("csv")
    if isinstance(csv, dict) and "path" in csv and not Path(csv["path"]).is_absolute():
        csv["path"] = str((p.parent / csv["path"]).resolve())
    return parse_config(data)


def json_schema() -> dict:
    return RunConfig.model_json_schema()
