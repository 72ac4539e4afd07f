"""Component availability and the decision-dependent SoC lower bound.

Availability follows a two-state (up/down) Markov chain with exponential
sojourns. The SoC lower bound of a flexible resource during a capacity call
is the composition of an incentive effect (capacity price widens the
usable range) and a discomfort effect (accumulated dispatch contracts the
range back toward the baseline SoC).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from gescc.drcc import Family, robust_quantile
from gescc.errors import ParameterError


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ------------------------------------------------------------- availability

@dataclass
class AvailabilityTrace:
    up: np.ndarray  # bool, (components, slots)
    dt_hours: float = 1.0

    @property
    def down_fraction(self) -> np.ndarray:
        return 1.0 - self.up.mean(axis=1)

    def to_csv(self, path, names: Sequence[str] | None = None) -> None:
        names = list(names) if names is not None else [f"c{i}" for i in range(self.up.shape[0])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", *names])
            for t in range(self.up.shape[1]):
                w.writerow([t, *self.up[:, t].astype(int).tolist()])


def mttf_hours(forced_outage_rate: float, mttr: float) -> float:
    """Steady-state identity FOR = MTTR / (MTTF + MTTR)."""
    if forced_outage_rate == 0:
        return np.inf
    return mttr * (1 - forced_outage_rate) / forced_outage_rate


def _one_trace(rng: np.random.Generator, FOR: float, mttr: float, n: int, dt: float) -> np.ndarray:
    if FOR == 0:
        return np.ones(n, dtype=bool)
    mttf = mttf_hours(FOR, mttr)
    horizon = n * dt
    state = rng.random() >= FOR  # start from the stationary distribution
    times = []
    states = []
    t = 0.0
    batch = max(16, int(2 * horizon / (mttf + mttr)) + 16)
    while t < horizon:
        u = rng.exponential(1.0, batch)
        for x in u:
            times.append(t)
            states.append(state)
            t += x * (mttf if state else mttr)
            state = not state
            if t >= horizon:
                break
    times = np.asarray(times)
    states = np.asarray(states, dtype=bool)
    slot_times = np.arange(n) * dt
    idx = np.searchsorted(times, slot_times, side="right") - 1
    return states[idx]


def sample_availability(components, horizon: int, seed, dt_hours: float = 1.0) -> AvailabilityTrace:
    """Sample up/down traces for ``horizon`` slots.

    Component ``i`` draws from its own stream ``(seed..., i)`` so adding a
    component never perturbs the traces of the others.
    """
    base = list(np.atleast_1d(seed).astype(np.int64).tolist())
    up = np.ones((len(components), int(horizon)), dtype=bool)
    for i, c in enumerate(components):
        FOR = float(c.forced_outage_rate)
        if not 0 <= FOR < 1:
            raise ParameterError(f"forced outage rate must be in [0, 1), got {FOR}")
        if not c.mttr > 0:
            raise ParameterError(f"mttr must be > 0, got {c.mttr}")
        up[i] = _one_trace(np.random.default_rng(base + [i]), FOR, float(c.mttr), int(horizon), dt_hours)
    return AvailabilityTrace(up, dt_hours)


# ------------------------------------------------------------------ DDU

@dataclass(frozen=True)
class DduSpec:
    family: Family = Family.UNIMODAL
    alpha: float = 1.0
    beta: float = 4.0
    rho: float = 0.2
    lam: float = 0.5
    cv_g: float = 0.1
    cv_h: float = 0.1
    qg_level: float = 0.5
    price_ref: float = 2000.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (0 <= self.rho <= 1 and 0 <= self.lam <= 1):
            raise ParameterError("rho and lambda must lie in [0, 1]")
        if self.cv_g < 0 or self.cv_h < 0:
            raise ParameterError("coefficients of variation must be >= 0")
        if not 0 < self.qg_level < 1:
            raise ParameterError("qg_level must lie in (0, 1)")
        if not self.price_ref > 0:
            raise ParameterError("price_ref must be > 0")


@dataclass
class DiuBounds:
    """Baseline SoC bounds; arrays are slot-of-day profiles (length 1 = constant)."""

    soc_lower: np.ndarray
    soc_upper: np.ndarray

    def __post_init__(self):
        self.soc_lower = np.atleast_1d(np.asarray(self.soc_lower, dtype=float))
        self.soc_upper = np.atleast_1d(np.asarray(self.soc_upper, dtype=float))
        lo, hi = np.broadcast_arrays(self.soc_lower, self.soc_upper)
        if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
            raise ParameterError("DIU bounds must satisfy 0 <= lower <= upper <= 1")

    @classmethod
    def constant(cls, lower: float, upper: float) -> "DiuBounds":
        return cls(np.array([lower]), np.array([upper]))

    @property
    def soc_baseline(self) -> np.ndarray:
        lo, hi = np.broadcast_arrays(self.soc_lower, self.soc_upper)
        return (lo + hi) / 2

    def _at(self, arr, slots) -> np.ndarray:
        return arr[np.asarray(slots) % arr.shape[0]]

    def lower(self, slots) -> np.ndarray:
        return self._at(self.soc_lower, slots)

    def upper(self, slots) -> np.ndarray:
        return self._at(self.soc_upper, slots)

    def baseline(self, slots) -> np.ndarray:
        return self._at(self.soc_baseline, slots)


@dataclass
class DiscomfortState:
    past_call_end_values: list[float] = field(default_factory=list)
    current: float = 0.0

    @property
    def k(self) -> int:
        """Index of the next call (1-based)."""
        return len(self.past_call_end_values) + 1

    @property
    def memory_mean(self) -> float:
        v = self.past_call_end_values
        return float(sum(v) / len(v)) if v else 0.0

    def close_call(self, d_end: float) -> None:
        self.past_call_end_values.append(float(d_end))
        self.current = float(d_end)


def discomfort(state: DiscomfortState, k: int, response_intensity, soc_dev, rho: float, lam: float):
    """Response discomfort: memory of past calls blended with the current call's
    intensity and SoC deviation from baseline."""
    if k < 1:
        raise ParameterError(f"call index must be >= 1, got {k}")
    past = state.past_call_end_values[: k - 1]
    memory = float(np.mean(past)) if past else 0.0
    return rho * memory + (1 - rho) * (lam * np.asarray(response_intensity)
                                       + (1 - lam) * np.asarray(soc_dev))


def incentive_quantile(diu_lower, cm_price: float, spec: DduSpec):
    """Quantile ``Q_g`` of the incentive-shifted lower bound.

    ``g = diu_lower * (1 - G)`` with ``E[G] = clamp(alpha * price/price_ref)``
    and ``sd(G) = cv_g * E[G]``. The robust upper quantile of ``g`` at
    ``qg_level`` is used and clamped to the support ``[0, diu_lower]``.
    """
    diu_lower = np.asarray(diu_lower, dtype=float)
    mu_g = float(np.clip(spec.alpha * cm_price / spec.price_ref, 0.0, 1.0))
    mean = diu_lower * (1 - mu_g)
    sd = diu_lower * spec.cv_g * mu_g
    q = mean + robust_quantile(spec.family, 1 - spec.qg_level) * sd
    return np.clip(q, 0.0, diu_lower)


def ddu_lower_bound_moments(diu_lower, soc_baseline, cm_price: float, D, spec: DduSpec):
    """Mean, standard deviation and support radius of the practical SoC floor."""
    qg = incentive_quantile(diu_lower, cm_price, spec)
    mu_h = np.clip(spec.beta * np.asarray(D, dtype=float), 0.0, 1.0)
    span = np.asarray(soc_baseline, dtype=float) - qg
    mu = span * mu_h + qg
    sigma = np.abs(span) * spec.cv_h * mu_h
    radius = np.abs(span) * np.ones_like(mu)
    if np.ndim(mu) == 0:
        return float(mu), float(sigma), float(radius)
    return mu, sigma, radius


def _support(mu, radius):
    lo = np.clip(mu - radius, 0.0, 1.0)
    hi = np.clip(mu + radius, 0.0, 1.0)
    return lo, hi


def ddu_quantile(mu, sigma, radius, family, u):
    """Inverse CDF of the family's simulation distribution at probability ``u``.

    NoAssumption: three-point mixture (support edges + mean) matching the
    moments; Symmetric: symmetric triangular; Unimodal: Beta on the support;
    SymmetricUnimodal: normal. Values are clamped to the support.
    """
    family = Family.parse(family)
    mu, sigma, radius, u = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (mu, sigma, radius, u))
    )
    lo, hi = _support(mu, radius)
    out = np.array(mu, dtype=float, copy=True)
    live = sigma > 0
    if not np.any(live):
        return out if out.ndim else float(out)

    if family is Family.SYMMETRIC:
        a = np.sqrt(6.0) * sigma
        left = mu - a + a * np.sqrt(2 * u)
        right = mu + a - a * np.sqrt(2 * (1 - u))
        val = np.where(u < 0.5, left, right)
    elif family is Family.SYMMETRIC_UNIMODAL:
        val = mu + sigma * stats.norm.ppf(np.clip(u, 1e-300, 1 - 1e-16))
    else:
        width = hi - lo
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.where(width > 0, (mu - lo) / width, 0.5)
            v = np.where(width > 0, sigma**2 / width**2, np.inf)
            cap = m * (1 - m)
        beta_ok = (v < cap) & (width > 0) & (m > 0) & (m < 1)
        val = np.array(mu, copy=True)
        if family is Family.UNIMODAL and np.any(beta_ok & live):
            sel = beta_ok & live
            common = cap[sel] / v[sel] - 1
            a = m[sel] * common
            b = (1 - m[sel]) * common
            val[sel] = lo[sel] + width[sel] * stats.beta.ppf(u[sel], a, b)
        three = live & ~(beta_ok if family is Family.UNIMODAL else np.zeros_like(live))
        if np.any(three):
            s = three
            with np.errstate(divide="ignore", invalid="ignore"):
                p_lo = np.where(width[s] > 0, (hi[s] - mu[s]) / width[s], 0.5)
                denom = (mu[s] - lo[s]) * (hi[s] - mu[s])
                w = np.where(denom > 0, np.minimum(1.0, sigma[s] ** 2 / denom), 0.0)
            uu = u[s]
            val[s] = np.where(uu < w * p_lo, lo[s], np.where(uu < w * p_lo + (1 - w), mu[s], hi[s]))
    out = np.where(live, np.clip(val, lo, hi), out)
    return out if out.ndim else float(out)


def sample_ddu_realization(moments, spec: DduSpec, seed) -> float:
    mu, sigma, radius = moments
    u = _rng(seed).random()
    return float(ddu_quantile(mu, sigma, radius, spec.family, u))
