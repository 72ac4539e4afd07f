"""Moment-based distributionally robust chance constraints.

A scalar chance constraint ``P(xi(x) <= b(x)) >= 1 - eps`` whose uncertain
term has decision-dependent mean ``mu(x)``, standard deviation ``sigma(x)`` and
support radius ``r(x)`` is replaced by the linear constraint

    mu(x) + psi*r(x) + pi*Finv*(y1 + y2) <= b(x),   y1 >= sigma(x),
                                                    y2 >= sqrt(2*psi)*r(x)

where ``Finv`` is the robust normalized quantile of the declared distribution
family and ``(psi, pi)`` inflate the moments when they are estimated from ``K``
samples. ``y1 + y2`` upper-bounds the 2-norm of ``y`` so the row stays linear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from gescc.errors import InfeasibleSpecError, ParameterError


class Family(str, Enum):
    NO_ASSUMPTION = "NoAssumption"
    SYMMETRIC = "Symmetric"
    UNIMODAL = "Unimodal"
    SYMMETRIC_UNIMODAL = "SymmetricUnimodal"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        aliases = {"NA": cls.NO_ASSUMPTION, "S": cls.SYMMETRIC, "U": cls.UNIMODAL,
                   "SU": cls.SYMMETRIC_UNIMODAL}
        if value in aliases:
            return aliases[value]
        return cls(value)


def robust_quantile(family, epsilon: float) -> float:
    """Worst-case normalized ``(1 - epsilon)`` quantile over a distribution family.

    These are the one-sided Chebyshev (Cantelli) bound and its refinements
    for symmetric and/or unimodal distributions.
    """
    family = Family.parse(family)
    if not 0 < epsilon <= 1:
        raise ParameterError(f"epsilon must be in (0, 1], got {epsilon}")
    e = float(epsilon)
    if family is Family.NO_ASSUMPTION:
        return math.sqrt((1 - e) / e)
    if family is Family.SYMMETRIC:
        return math.sqrt(1 / (2 * e)) if e <= 0.5 else 0.0
    if family is Family.UNIMODAL:
        if e <= 1 / 6:
            return math.sqrt((4 - 9 * e) / (9 * e))
        return math.sqrt((3 - 3 * e) / (1 + 3 * e))
    if e <= 1 / 6:
        return math.sqrt(2 / (9 * e))
    if e <= 0.5:
        return math.sqrt(3) * (1 - 2 * e)
    return 0.0


@dataclass(frozen=True)
class ChanceSpec:
    epsilon: float = 0.05
    family: Family = Family.UNIMODAL
    K: float = math.inf
    p: int = 2

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not 0 < self.epsilon < 1:
            raise ParameterError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.p < 2:
            raise ParameterError(f"p must be >= 2, got {self.p}")
        if not self.K > 0:
            raise ParameterError(f"K must be positive, got {self.K}")

    @property
    def threshold(self) -> float:
        """Smallest admissible sample count (exclusive)."""
        return (2 + math.sqrt(2 * math.log(4 / self.epsilon))) ** self.p

    @property
    def quantile(self) -> float:
        return robust_quantile(self.family, self.epsilon)


def inflation_constants(spec: ChanceSpec) -> tuple[float, float]:
    """Return ``(psi, pi)``; ``(0, 1)`` when ``K`` is infinite."""
    if math.isinf(spec.K):
        return 0.0, 1.0
    if not spec.K > spec.threshold:
        raise InfeasibleSpecError(
            f"K={spec.K} does not exceed the validity threshold {spec.threshold:.4f} "
            f"for epsilon={spec.epsilon}, p={spec.p}"
        )
    K, p = float(spec.K), spec.p
    psi = K ** (1 / p - 1 / 2)
    pi = (1 - (4 / spec.epsilon) * math.exp(-((K ** (1 / p) - 2) ** 2) / 2)) ** -0.5
    return psi, pi


def confidence_nu(spec: ChanceSpec) -> float:
    """Probability that the sample moments miss the confidence region (0 for K=inf)."""
    if math.isinf(spec.K):
        return 0.0
    return 4 * math.exp(-((spec.K ** (1 / spec.p) - 2) ** 2) / 2)


@dataclass(frozen=True)
class Affine:
    """``const + coef @ x`` over a decision vector of fixed length."""

    const: float
    coef: np.ndarray

    @classmethod
    def constant(cls, value: float, n: int) -> "Affine":
        return cls(float(value), np.zeros(n))

    def __call__(self, x) -> float:
        return float(self.const + self.coef @ np.asarray(x, dtype=float))

    def scale(self, k: float) -> "Affine":
        return Affine(self.const * k, self.coef * k)

    def __add__(self, other: "Affine") -> "Affine":
        return Affine(self.const + other.const, self.coef + other.coef)


@dataclass(frozen=True)
class ReformedConstraint:
    """Linear surrogate of one scalar chance constraint.

    ``mean_term + radius_coef*r + norm_coef*(y1 + y2) <= rhs`` with
    ``y1 = sigma`` and ``y2 = sqrt(2*psi)*r`` substituted at their lower bounds.
    """

    mean_term: Affine
    radius_term: Affine
    norm_coef: float
    y1: Affine
    y2: Affine
    rhs: Affine
    psi: float
    pi: float
    quantile: float

    def lhs(self) -> Affine:
        return self.mean_term + self.radius_term.scale(self.psi) + (self.y1 + self.y2).scale(self.norm_coef)

    def as_row(self) -> tuple[np.ndarray, float]:
        """Return ``(a, c)`` such that the constraint reads ``a @ x <= c``."""
        lhs = self.lhs()
        return lhs.coef - self.rhs.coef, self.rhs.const - lhs.const

    def satisfied(self, x, tol: float = 1e-9) -> bool:
        a, c = self.as_row()
        return float(a @ np.asarray(x, dtype=float)) <= c + tol


def reformulate(mu: Affine, sigma: Affine, radius: Affine, rhs: Affine,
                spec: ChanceSpec) -> ReformedConstraint:
    psi, pi = inflation_constants(spec)
    q = spec.quantile
    return ReformedConstraint(
        mean_term=mu,
        radius_term=radius,
        norm_coef=pi * q,
        y1=sigma,
        y2=radius.scale(math.sqrt(2 * psi)),
        rhs=rhs,
        psi=psi,
        pi=pi,
        quantile=q,
    )


def floor_margin(spec: ChanceSpec) -> tuple[float, float]:
    """Coefficients ``(k_sigma, k_radius)`` so the reformed floor is
    ``mu + k_sigma*sigma + k_radius*r`` for constant-sign inputs."""
    psi, pi = inflation_constants(spec)
    q = spec.quantile
    return pi * q, psi + pi * q * math.sqrt(2 * psi)


def empirical_coverage(solution_soc, ddu_sampler, n_samples: int = 10_000, seed=0) -> float:
    """Fraction of sampled lower-bound trajectories that ``solution_soc`` respects.

    ``ddu_sampler(rng, n)`` must return an ``(n, len(solution_soc))`` array of
    sampled floors. A sample counts as covered only if every slot is covered.
    """
    if n_samples < 1000:
        raise ParameterError(f"n_samples must be >= 1000, got {n_samples}")
    rng = np.random.default_rng(seed)
    soc = np.asarray(solution_soc, dtype=float)
    floors = np.asarray(ddu_sampler(rng, n_samples), dtype=float).reshape(n_samples, -1)
    ok = np.all(soc[None, :] >= floors - 1e-12, axis=1)
    return float(ok.mean())
