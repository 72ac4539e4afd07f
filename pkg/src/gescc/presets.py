"""Ready-made desk-scale systems and storage units."""
from __future__ import annotations

from gescc.dispatch import GesUnit
from gescc.scenario import BusSpec, GeneratorSpec, ScenarioSet, SynthSpec, synthesize
from gescc.stochastic import DduSpec, DiuBounds


def desk_scenario(seed: int = 7, peak_load_mw: float = 1000.0, penetration: float = 0.3,
                  n_units: int = 5, unit_mw: float = 200.0, forced_outage_rate: float = 0.05,
                  mttr: float = 48.0, years: int = 1, daily_amplitude: float = 0.08,
                  seasonal_amplitude: float = 0.2, **synth) -> ScenarioSet:
    """Single-bus synthetic system: ``n_units`` identical thermal units plus renewables.

    The defaults give long, energy-heavy deficit episodes (few large units,
    slow repair, a flat daily and strong seasonal load shape) so storage
    duration and power both matter for adequacy.
    """
    gens = [GeneratorSpec(unit_mw, forced_outage_rate, mttr) for _ in range(n_units)]
    spec = SynthSpec(peak_load_mw=peak_load_mw, penetration=penetration, years=years,
                     daily_amplitude=daily_amplitude, seasonal_amplitude=seasonal_amplitude, **synth)
    return synthesize(spec, seed, buses=[BusSpec(0, conventional_units=gens)])


def es_unit(power_mw: float, duration_h: float = 4.0, name: str = "es", soc_withhold: float = 0.2,
            eta: float = 0.9, self_discharge: float = 0.0, bus: int = 0, **kw) -> GesUnit:
    return GesUnit(name, power_mw * duration_h, power_mw, power_mw, kind="ES", bus=bus, eta_c=eta,
                   eta_d=eta, self_discharge=self_discharge, soc_withhold=soc_withhold,
                   diu=DiuBounds.constant(0.0, 1.0), **kw)


def ves_unit(power_mw: float, duration_h: float = 4.0, name: str = "ves", soc_withhold: float = 0.2,
             ddu: DduSpec | None = None, diu=(0.2, 0.8), eta: float = 0.95, self_discharge: float = 0.0,
             bus: int = 0, **kw) -> GesUnit:
    """Virtual storage with baseline SoC bounds ``diu`` and behavioral floor ``ddu``."""
    return GesUnit(name, power_mw * duration_h, power_mw, power_mw, kind="VES", bus=bus, eta_c=eta,
                   eta_d=eta, self_discharge=self_discharge, soc_withhold=soc_withhold,
                   diu=DiuBounds.constant(*diu), ddu=ddu if ddu is not None else DduSpec(), **kw)
