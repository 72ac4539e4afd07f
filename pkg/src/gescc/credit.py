"""Capacity credit by reliability equivalence, and the storage economics split."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from gescc.dispatch import GesUnit
from gescc.drcc import ChanceSpec
from gescc.errors import ParameterError
from gescc.scenario import GeneratorSpec, ScenarioSet
from gescc.smcs import (AdequacyLedger, EconomicsTally, SmcsOptions, SmcsResult, SystemVariant,
                        build_pre_dispatch, run_smcs)
from gescc.stochastic import DiuBounds


class Metric(str, Enum):
    ECC = "ECC"  # conventional unit with the system's typical outage rate
    EFC = "EFC"  # perfectly reliable unit
    ELCC = "ELCC"  # extra load carried
    EGCS = "EGCS"  # conventional capacity retired
    ESCS = "ESCS"  # deterministic storage substituted


@dataclass(frozen=True)
class CcProblem:
    metric: Metric
    scenario: ScenarioSet
    units: tuple[GesUnit, ...]
    chance: ChanceSpec | None = None
    options: SmcsOptions = SmcsOptions()
    tolerance: float = 0.01
    reference_for: float | None = None  # default: capacity-weighted mean of the fleet
    reference_mttr: float = 24.0
    reference_efficiency: float = 0.9
    practical: bool = True
    noise_sigmas: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "units", tuple(self.units))
        if not 0 < self.tolerance < 1:
            raise ParameterError(f"tolerance must lie in (0, 1), got {self.tolerance}")
        if self.noise_sigmas < 0:
            raise ParameterError("noise_sigmas must be >= 0")

    @property
    def ges_power(self) -> float:
        return float(sum(u.p_discharge_max for u in self.units))

    @property
    def max_iterations(self) -> int:
        return math.ceil(math.log2(1 / self.tolerance))


@dataclass
class CcReport:
    metric: str
    value: float
    ges_power_mw: float
    capacity_mw: float
    years: int
    eens_test: float
    eens_base: float
    history: list[dict] = field(default_factory=list)
    iterations: int = 0
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric, "value": self.value, "ges_power_mw": self.ges_power_mw,
            "capacity_mw": self.capacity_mw, "years": self.years, "eens_test": self.eens_test,
            "eens_base": self.eens_base, "iterations": self.iterations, "warning": self.warning,
            "history": self.history,
        }


def _fleet_for(scenario: ScenarioSet) -> float:
    gens = scenario.generators
    if not gens:
        return 0.0
    cap = np.array([g.capacity for g in gens])
    return float(np.sum(cap * [g.forced_outage_rate for g in gens]) / cap.sum())


def reference_storage(problem: CcProblem, capacity_mw: float) -> GesUnit:
    """Deterministic storage of ``capacity_mw`` with the tested resource's duration."""
    units = problem.units
    duration = sum(u.energy_capacity for u in units) / problem.ges_power
    eta = problem.reference_efficiency
    return GesUnit("reference_es", energy_capacity=max(capacity_mw * duration, 1e-9),
                   p_charge_max=capacity_mw, p_discharge_max=capacity_mw, kind="ES",
                   eta_c=eta, eta_d=eta, diu=DiuBounds.constant(0.0, 1.0))


def evaluate_metric(problem: CcProblem, progress=None) -> CcReport:
    """Bisect the reference capacity until the reference system matches the test system's EENS.

    All runs share the seed and the number of simulated years (common random
    numbers). The search stops once the mean paired EENS difference is within
    ``noise_sigmas`` standard errors or the bracket falls below
    ``tolerance * C_max``. The returned value is the capacity over GES rated power.
    """
    metric = problem.metric
    C_ges = problem.ges_power
    opt = problem.options
    if not problem.units or C_ges <= 0:
        return CcReport(metric.value, 0.0, 0.0, 0.0, 0, 0.0, 0.0)
    sc = problem.scenario

    no_ges = replace(opt, with_ges=False)
    with_ges = replace(opt, with_ges=True)
    base = run_smcs(sc, [], None, no_ges)
    test = run_smcs(sc, list(problem.units), problem.chance, with_ges)
    # freeze one year count (both sides converged) for every paired run
    n_years = max(base.ledger.years, test.ledger.years)
    opt_n = replace(opt, years=n_years)
    if base.ledger.years != n_years:
        base = run_smcs(sc, [], None, replace(no_ges, years=n_years))
    if test.ledger.years != n_years:
        test = run_smcs(sc, list(problem.units), problem.chance, replace(with_ges, years=n_years), pd=test.pre_dispatch)
    pd_cache = test.pre_dispatch
    P = problem.practical

    def batches(res: SmcsResult) -> np.ndarray:
        return res.ledger.batches(P)

    if metric in (Metric.ECC, Metric.EFC, Metric.ESCS):
        target = batches(test)
        FOR = 0.0 if metric is Metric.EFC else (
            problem.reference_for if problem.reference_for is not None else _fleet_for(sc))

        def run_ref(C):
            if C <= 0:
                return base
            if metric is Metric.ESCS:
                return run_smcs(sc, [reference_storage(problem, C)], None,
                                replace(opt_n, with_ges=True, method="M2-greedy"))
            gen = GeneratorSpec(C, FOR, problem.reference_mttr)
            return run_smcs(sc, [], None, replace(opt_n, with_ges=False), SystemVariant(extra_generators=(gen,)))

        def gap(res):  # > 0 means the reference capacity is still too small
            return batches(res) - target
        start_gap = batches(base) - target
    else:
        target = batches(base)
        peak = float(sc.system_load.max())
        conv = float(sum(g.capacity for g in sc.generators))

        def run_ref(C):
            if C <= 0:
                return test
            if metric is Metric.ELCC:
                var = SystemVariant(load_scale=1 + C / peak)
            else:
                var = SystemVariant(conv_scale=max(0.0, 1 - C / conv))
            return run_smcs(sc, list(problem.units), problem.chance, opt_n, var, pd=pd_cache)

        def gap(res):
            return target - batches(res)
        start_gap = target - batches(test)

    report = CcReport(metric.value, 0.0, C_ges, 0.0, n_years,
                      float(batches(test).mean()), float(batches(base).mean()))

    def record(C, d):
        se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
        report.history.append({"capacity_mw": C, "mean_gap": float(d.mean()), "se": se})
        if progress:
            progress(C, float(d.mean()), se)
        return float(d.mean()), se

    g0, _ = record(0.0, start_gap)
    if g0 <= 0:
        msg = f"{metric.value}: storage does not improve reliability (gap {g0:.6g}); credit set to 0"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        report.warning = msg
        return report

    def done(g, se):
        return abs(g) <= problem.noise_sigmas * se

    lo, hi = 0.0, C_ges
    g_hi, se_hi = record(hi, gap(run_ref(hi)))
    if g_hi >= 0 or done(g_hi, se_hi):
        report.capacity_mw = hi
        report.value = hi / C_ges
        return report
    for _ in range(problem.max_iterations):
        if hi - lo <= problem.tolerance * C_ges:
            break
        mid = 0.5 * (lo + hi)
        g, se = record(mid, gap(run_ref(mid)))
        report.iterations += 1
        if done(g, se):
            lo = hi = mid
            break
        if g > 0:
            lo = mid
        else:
            hi = mid
    C = 0.5 * (lo + hi)
    report.capacity_mw = C
    report.value = C / C_ges
    return report


# ------------------------------------------------------------ economics

def economics(with_ges: AdequacyLedger, without_ges: AdequacyLedger, voll: float = 10_000.0,
              penalty: float = 2_000.0) -> EconomicsTally:
    """Annual storage economics from paired runs.

    Energy-market revenue is pre-dispatch arbitrage; capacity-market revenue
    values the practical EENS reduction at VoLL; non-delivered call energy is
    penalized.
    """
    em = float(np.mean(with_ges.em_revenue)) if with_ges.em_revenue else 0.0
    cm = (without_ges.eens_practical - with_ges.eens_practical) * voll
    pen = (float(np.mean(with_ges.shortfall_mwh)) if with_ges.shortfall_mwh else 0.0) * penalty
    return EconomicsTally(em, cm, pen)


def pre_dispatch_revenue(scenario: ScenarioSet, units, method="M4-risk-averse") -> float:
    """Arbitrage revenue over the whole scenario."""
    pd = build_pre_dispatch(scenario, list(units), method)
    return pd.profit(scenario.price_em)
