import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gescc.drcc import (Affine, ChanceSpec, Family, confidence_nu, empirical_coverage, floor_margin,
                        inflation_constants, reformulate, robust_quantile)
from gescc.errors import InfeasibleSpecError, ParameterError
from gescc.stochastic import ddu_quantile

FAMS = list(Family)


def test_known_quantiles():
    assert robust_quantile("NA", 0.05) == pytest.approx(4.358898943540674, abs=1e-12)
    assert robust_quantile("U", 0.05) == pytest.approx(2.808716591058786, abs=1e-12)
    assert robust_quantile("SU", 0.5) == 0.0
    assert robust_quantile("S", 0.6) == 0.0


def test_quantile_rejects_bad_epsilon():
    with pytest.raises(ParameterError):
        robust_quantile(Family.UNIMODAL, 0.0)
    with pytest.raises(ParameterError):
        robust_quantile(Family.UNIMODAL, 1.5)


@given(st.floats(1e-4, 1.0), st.floats(1e-4, 1.0))
def test_quantile_non_increasing_in_epsilon(e1, e2):
    lo, hi = sorted((e1, e2))
    for f in FAMS:
        assert robust_quantile(f, lo) >= robust_quantile(f, hi) - 1e-12


@given(st.floats(1e-4, 1 / 6))
def test_family_ordering(eps):
    q = [robust_quantile(f, eps) for f in ("NA", "S", "U", "SU")]
    assert q[0] >= q[1] >= q[2] >= q[3]


def test_inflation_examples():
    psi, pi = inflation_constants(ChanceSpec(0.05, "U", K=100, p=2))
    assert psi == 1.0
    assert abs(pi - 1) < 1e-11
    assert inflation_constants(ChanceSpec(0.05, "U")) == (0.0, 1.0)
    assert ChanceSpec(0.05, K=24).threshold == pytest.approx(24.60571, abs=1e-4)
    with pytest.raises(InfeasibleSpecError, match="threshold"):
        inflation_constants(ChanceSpec(0.05, "U", K=24, p=2))
    assert confidence_nu(ChanceSpec()) == 0.0


@settings(max_examples=50)
@given(st.floats(30, 1e6), st.floats(30, 1e6), st.integers(2, 4))
def test_inflation_monotone_in_K(k1, k2, p):
    lo, hi = sorted((k1, k2))
    spec_lo, spec_hi = ChanceSpec(0.05, K=lo, p=p), ChanceSpec(0.05, K=hi, p=p)
    if lo <= spec_lo.threshold:
        return
    psi_lo, pi_lo = inflation_constants(spec_lo)
    psi_hi, pi_hi = inflation_constants(spec_hi)
    assert psi_hi <= psi_lo + 1e-15
    assert abs(pi_hi - 1) <= abs(pi_lo - 1) + 1e-15


def _scalar(v, n=1):
    return Affine.constant(v, n)


def test_reformulate_scalar_example():
    # SoC >= 0.3 + 4.3589 * 0.05
    soc = Affine(0.0, np.array([1.0]))
    rc = reformulate(_scalar(0.3), _scalar(0.05), _scalar(0.0), soc, ChanceSpec(0.05, "NA"))
    a, c = rc.as_row()
    assert c / a[0] == pytest.approx(0.3 + math.sqrt(19) * 0.05, abs=1e-12)
    assert c / a[0] == pytest.approx(0.51794, abs=1e-5)
    assert rc.satisfied([0.518]) and not rc.satisfied([0.517])


def test_reformulate_zero_spread_is_mean():
    soc = Affine(0.0, np.array([1.0]))
    rc = reformulate(_scalar(0.4), _scalar(0.0), _scalar(0.0), soc, ChanceSpec())
    assert rc.satisfied([0.4]) and not rc.satisfied([0.4 - 1e-6])


def test_reformulate_finite_K_terms():
    soc = Affine(0.0, np.array([1.0]))
    spec = ChanceSpec(0.05, "U", K=100, p=2)
    rc = reformulate(_scalar(0.3), _scalar(0.0), _scalar(0.2), soc, spec)
    assert rc.psi == 1.0
    assert rc.radius_term.scale(rc.psi).const == pytest.approx(0.2)
    assert rc.y2.const == pytest.approx(math.sqrt(2) * 0.2)
    expected = 0.3 + 0.2 + rc.pi * spec.quantile * math.sqrt(2) * 0.2
    assert rc.lhs().const == pytest.approx(expected)
    ks, kr = floor_margin(spec)
    assert 0.3 + kr * 0.2 == pytest.approx(expected)


def test_coverage_examples():
    def sampler(rng, n):
        u = rng.random(n)
        return ddu_quantile(0.3, 0.05, 0.3, Family.SYMMETRIC, u)[:, None] * np.ones((1, 3))

    assert empirical_coverage(np.ones(3), sampler, 5000) == 1.0
    cov = empirical_coverage(np.full(3, 0.3), sampler, 10_000, seed=3)
    assert abs(cov - 0.5) < 3 * math.sqrt(0.25 / 10_000)
    with pytest.raises(ParameterError):
        empirical_coverage(np.ones(3), sampler, 999)


@pytest.mark.parametrize("family", FAMS)
def test_reformed_floor_covers_family_sampler(family):
    mu, sigma, r = 0.35, 0.04, 0.3
    spec = ChanceSpec(0.05, family)
    floor = mu + floor_margin(spec)[0] * sigma

    def sampler(rng, n):
        return ddu_quantile(mu, sigma, r, family, rng.random(n))[:, None]

    assert empirical_coverage(np.array([floor]), sampler, 20_000, seed=1) >= 0.95 - 0.01
