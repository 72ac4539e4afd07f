import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gescc.drcc import Family
from gescc.errors import ParameterError
from gescc.scenario import GeneratorSpec
from gescc.stochastic import (DduSpec, DiscomfortState, ddu_lower_bound_moments, ddu_quantile, discomfort,
                              incentive_quantile, mttf_hours, sample_availability,
                              sample_ddu_realization)


class _C:
    def __init__(self, FOR, mttr):
        self.forced_outage_rate, self.mttr = FOR, mttr


def test_zero_for_is_always_up():
    tr = sample_availability([GeneratorSpec(100, 0.0)], 1000, 1)
    assert tr.up.all()


def test_long_run_down_fraction():
    assert mttf_hours(0.05, 24) == pytest.approx(456.0)
    tr = sample_availability([GeneratorSpec(100, 0.05, 24)], 1_000_000, 11)
    assert abs(tr.down_fraction[0] - 0.05) <= 0.005


def test_trace_determinism_and_stream_isolation():
    g = [GeneratorSpec(100, 0.1, 10), GeneratorSpec(50, 0.2, 5)]
    a = sample_availability(g, 5000, 4)
    b = sample_availability(g, 5000, 4)
    assert np.array_equal(a.up, b.up)
    c = sample_availability(g + [GeneratorSpec(10, 0.3, 3)], 5000, 4)
    assert np.array_equal(a.up, c.up[:2])


def test_trace_rejects_certain_outage():
    with pytest.raises(ParameterError):
        sample_availability([_C(1.0, 24)], 10, 0)


def test_discomfort_examples():
    st0 = DiscomfortState()
    assert discomfort(st0, 1, 0.25, 0.1, 0.2, 0.5) == pytest.approx(0.14)
    st1 = DiscomfortState([0.2, 0.4])
    assert discomfort(st1, 3, 0.9, 0.7, 1.0, 0.5) == pytest.approx(0.3)
    assert discomfort(st0, 1, 0.0, 0.0, 0.2, 0.5) == 0.0
    with pytest.raises(ParameterError):
        discomfort(st0, 0, 0.0, 0.0, 0.2, 0.5)


def test_moments_examples():
    # cv_g = 0 makes Q_g exactly zero when the incentive saturates
    spec = DduSpec(alpha=1.0, beta=4.0, cv_g=0.0)
    mu, sigma, r = ddu_lower_bound_moments(0.4, 0.5, spec.price_ref, 0.14, spec)
    assert incentive_quantile(0.4, spec.price_ref, spec) == 0.0
    assert mu == pytest.approx(0.28)
    assert sigma == pytest.approx(0.5 * 0.1 * 0.56)
    assert r == pytest.approx(0.5)
    mu0, s0, _ = ddu_lower_bound_moments(0.4, 0.5, 1000.0, 0.0, spec)
    assert s0 == 0 and mu0 == pytest.approx(float(incentive_quantile(0.4, 1000.0, spec)))
    mu1, _, _ = ddu_lower_bound_moments(0.4, 0.5, 1000.0, 0.3, spec)
    assert mu1 == pytest.approx(0.5)


@given(st.floats(0, 5000), st.floats(0, 5000), st.floats(0, 1), st.floats(0, 1))
def test_mu_monotone(p1, p2, d1, d2):
    spec = DduSpec()
    lo_p, hi_p = sorted((p1, p2))
    lo_d, hi_d = sorted((d1, d2))
    m = lambda p, d: ddu_lower_bound_moments(0.3, 0.6, p, d, spec)[0]
    assert m(hi_p, lo_d) <= m(lo_p, lo_d) + 1e-12
    assert m(lo_p, hi_d) >= m(lo_p, lo_d) - 1e-12


def test_sampler_zero_sigma_and_determinism():
    spec = DduSpec()
    assert sample_ddu_realization((0.3, 0.0, 0.2), spec, 1) == 0.3
    assert sample_ddu_realization((0.3, 0.05, 0.2), spec, 9) == sample_ddu_realization((0.3, 0.05, 0.2), spec, 9)


@pytest.mark.parametrize("family", list(Family))
def test_sampler_mean_clt(family):
    mu, sigma, r = 0.5, 0.06, 0.4
    u = np.random.default_rng(5).random(100_000)
    x = ddu_quantile(mu, sigma, r, family, u)
    assert abs(x.mean() - mu) <= 3 * sigma / math.sqrt(x.size)
    assert x.min() >= mu - r - 1e-12 and x.max() <= mu + r + 1e-12


@given(st.floats(0.05, 0.95), st.floats(0.001, 0.2), st.floats(0.01, 0.5),
       st.sampled_from(list(Family)))
def test_quantile_monotone_in_u(mu, sigma, r, family):
    u = np.linspace(0.001, 0.999, 200)
    x = ddu_quantile(mu, sigma, r, family, u)
    assert np.all(np.diff(x) >= -1e-12)
    assert np.all(x >= 0) and np.all(x <= 1)
