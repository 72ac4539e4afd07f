import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gescc.dispatch import CallRecord, DispatchSchedule, GesUnit
from gescc.practical import apply_bounds, practical_bounds
from gescc.stochastic import DduSpec, DiuBounds, incentive_quantile


def _sched(soc, pd=None, E=10.0, eta=0.9):
    soc = np.asarray(soc, dtype=float)[None, :]
    n = soc.shape[1] - 1
    dis = -np.minimum(np.diff(soc[0]), 0) * E * eta
    ch = np.maximum(np.diff(soc[0]), 0) * E / eta
    return DispatchSchedule(ch[None, :], dis[None, :], soc, 1.0, "RD")


def _ves(E=10.0, eta=0.9):
    return GesUnit("v", E, E / 4, E / 4, kind="VES", eta_c=eta, eta_d=eta,
                   diu=DiuBounds.constant(0.2, 0.8), ddu=DduSpec())


def test_clip_single_slot():
    u = _ves()
    th = _sched([0.5, 0.4, 0.25, 0.25])
    b = np.array([[0.0, 0.3, 0.0]])  # one call over slots 0..2
    out = apply_bounds(th, b, [u])
    assert out.practical_soc[0, 2] == pytest.approx(0.3)
    cut = th.p_discharge[0, 1] - out.practical_p_discharge[0, 1]
    assert cut == pytest.approx(0.05 * 10 * 0.9)
    assert out.shortfall_energy.sum() == pytest.approx(cut)
    assert len(out.clip_events) == 1 and out.clip_events[0].slot == 1


def test_identity_above_bounds():
    th = _sched([0.6, 0.5, 0.45, 0.4])
    out = apply_bounds(th, np.full((1, 3), 0.1), [_ves()])
    np.testing.assert_array_equal(out.practical_soc, th.soc)
    assert out.shortfall_energy.sum() == 0 and not out.clip_events


def test_bound_one_blocks_discharge():
    th = _sched([0.6, 0.5, 0.45, 0.4])
    out = apply_bounds(th, np.ones((1, 3)), [_ves()])
    assert np.all(out.practical_p_discharge == 0)
    assert out.shortfall_energy.sum() == pytest.approx(th.p_discharge.sum())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=10), st.floats(0.0, 0.8))
def test_apply_bounds_idempotent_and_respects_floor(socs, floor):
    th = _sched(socs)
    b = np.full((1, len(socs) - 1), floor)
    u = _ves()
    once = apply_bounds(th, b, [u])
    sched = DispatchSchedule(once.practical_p_charge, once.practical_p_discharge, once.practical_soc, 1.0)
    twice = apply_bounds(sched, b, [u])
    np.testing.assert_allclose(twice.practical_soc, once.practical_soc, atol=1e-12)
    assert twice.shortfall_energy.sum() == pytest.approx(0.0, abs=1e-9)
    # a slot can only end below the floor if it did not discharge
    below = once.practical_soc[0, 1:] < floor - 1e-12
    assert np.all(once.practical_p_discharge[0, below] == 0)
    assert np.all(once.practical_p_discharge <= th.p_discharge + 1e-12)


def _call(D):
    D = np.asarray(D, dtype=float)[None, :]
    return CallRecord(1, 0, D.shape[1] - 1, np.zeros(1), D, D[:, -1])


def test_zero_discharge_gives_incentive_only_floor():
    u = _ves()
    th = _sched([0.5] * 5)
    b = practical_bounds(th, [_call(np.zeros(4))], [u], seed=0)
    np.testing.assert_allclose(b[0], incentive_quantile(0.2, 2000.0, u.ddu))
    assert np.all(b[0] <= 0.2)


def test_floor_rises_with_discomfort_and_is_reproducible():
    u = _ves()
    th = _sched(np.linspace(0.8, 0.2, 7))
    D = np.linspace(0.02, 0.2, 6)
    for seed in range(20):
        b = practical_bounds(th, [_call(D)], [u], seed=seed)
        assert np.all(np.diff(b[0]) >= -1e-12)
        np.testing.assert_array_equal(b, practical_bounds(th, [_call(D)], [u], seed=seed))


def test_units_without_ddu_unbounded():
    es = GesUnit("e", 10, 2.5, 2.5)
    b = practical_bounds(_sched([0.5] * 3), [_call([0.1, 0.1])], [es], seed=0)
    assert np.isnan(b).all()
