import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gescc.dispatch import (DispatchSchedule, GesUnit, Method, Regime, classify, coordinate, pre_dispatch,
                            re_dispatch, recovery_step)
from gescc.errors import InfeasibleDispatchError
from gescc.stochastic import DiuBounds

from oracles import dp_arbitrage, lp_redispatch


def _unit(E=10.0, P=10.0, eta=1.0, withhold=0.0, lo=0.0, hi=1.0, soc0=0.5, **kw):
    return GesUnit("u", E, P, P, eta_c=eta, eta_d=eta, soc_withhold=withhold,
                   diu=DiuBounds.constant(lo, hi), soc0=soc0, **kw)


# ------------------------------------------------------------- pre-dispatch

def test_pre_dispatch_examples():
    u = _unit()
    s = pre_dispatch(u, [10, 50, 10, 50])
    assert s.profit([10, 50, 10, 50]) == pytest.approx(600.0, abs=1e-6)
    s = pre_dispatch(u, [10, 50, 10, 50], withhold=0.5)
    assert s.profit([10, 50, 10, 50]) == pytest.approx(400.0, abs=1e-6)
    s = pre_dispatch(_unit(eta=0.9), [40.0] * 24)
    assert s.profit([40.0] * 24) == pytest.approx(0.0, abs=1e-6)
    assert np.abs(s.net()).max() < 1e-6


def test_pre_dispatch_matches_dp_examples():
    assert dp_arbitrage([10, 50, 10, 50], 10, 10, 10, 1, 1, 0, 0.5, 0.0, 1.0) == pytest.approx(600)
    assert dp_arbitrage([10, 50, 10, 50], 10, 10, 10, 1, 1, 0, 0.5, 0.5, 1.0) == pytest.approx(400)


def test_pre_dispatch_infeasible_names_bound():
    with pytest.raises(InfeasibleDispatchError, match="soc_withhold"):
        pre_dispatch(_unit(withhold=0.6), [1, 2, 3])
    with pytest.raises(InfeasibleDispatchError, match="DIU lower"):
        pre_dispatch(_unit(lo=0.7), [1, 2, 3])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-20, 200), min_size=2, max_size=24), st.floats(0.7, 1.0),
       st.floats(0.05, 2.0), st.floats(0.0, 0.5), st.floats(0.0, 0.01))
def test_pre_dispatch_invariants(prices, eta, p_ratio, withhold, sd):
    u = _unit(E=10.0, P=10.0 * p_ratio, eta=eta, withhold=withhold, soc0=0.5, self_discharge=sd)
    s = pre_dispatch(u, prices)
    assert s.overlap() <= 1e-9
    assert s.recurrence_residual([u]) <= 1e-9
    if sd == 0:  # idling is feasible, so trading never loses money
        assert s.profit(prices) >= -1e-6
    assert s.soc[0, 1:].min() >= withhold - 1e-9 and s.soc[0, 1:].max() <= 1 + 1e-9
    assert s.soc[0, -1] == pytest.approx(0.5, abs=1e-9)


def test_pre_dispatch_against_dp_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        T = int(rng.integers(2, 9))
        prices = np.round(rng.uniform(0, 100, T), 2)
        E = 10.0
        P = float(rng.choice([1.0, 2.0, 2.5, 5.0, 10.0]))
        withhold = float(rng.choice([0.0, 0.1, 0.2, 0.3]))
        u = _unit(E=E, P=P, eta=1.0, withhold=withhold, soc0=0.5)
        lp = pre_dispatch(u, prices).profit(prices)
        dp = dp_arbitrage(prices, E, P, P, 1.0, 1.0, 0.0, 0.5, withhold, 1.0)
        assert lp >= dp - 1e-6
        assert lp <= dp + 0.01 * max(abs(dp), 1.0)


# ------------------------------------------------------------- re-dispatch

def test_re_dispatch_examples():
    u = _unit(soc0=0.5)
    r = re_dispatch([u], [-5.0], [0.5])
    assert r.schedule.p_discharge[0, 0] == pytest.approx(5.0, abs=1e-6)
    assert r.curtailment.sum() == pytest.approx(0.0, abs=1e-6)
    r = re_dispatch([_unit(lo=0.3)], [-5.0], [0.5])
    assert r.schedule.p_discharge[0, 0] == pytest.approx(2.0, abs=1e-6)
    assert r.curtailment.sum() == pytest.approx(3.0, abs=1e-6)
    r = re_dispatch([u], [-20.0], [1.0])
    assert r.schedule.p_discharge[0, 0] == pytest.approx(10.0, abs=1e-6)
    assert r.curtailment.sum() >= 10.0 - 1e-6


def _random_fleet(rng, U):
    E = rng.uniform(5, 50, U)
    P = rng.uniform(1, 20, U)
    eta = rng.uniform(0.8, 1.0, U)
    lo = rng.uniform(0, 0.3, U)
    start = rng.uniform(0.3, 1.0, U)
    return E, P, eta, lo, start


def test_re_dispatch_matches_cvxpy():
    rng = np.random.default_rng(1)
    for _ in range(15):
        U, L = int(rng.integers(1, 4)), int(rng.integers(1, 8))
        E, P, eta, lo, start = _random_fleet(rng, U)
        nc = rng.uniform(-40, 10, L)
        units = [GesUnit(f"u{i}", E[i], P[i], P[i], eta_c=eta[i], eta_d=eta[i],
                         diu=DiuBounds.constant(lo[i], 1.0)) for i in range(U)]
        r = re_dispatch(units, nc, start)
        ref = lp_redispatch(E, P, P, eta, eta, start, lo, np.ones(U), nc)
        assert r.curtailment.sum() == pytest.approx(ref, abs=1e-4)
        assert r.schedule.overlap() <= 1e-9
        assert r.schedule.recurrence_residual(units) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 3.0))
def test_curtailment_non_increasing_in_capacity(seed, factor):
    rng = np.random.default_rng(seed)
    U, L = 2, 6
    E, P, eta, lo, start = _random_fleet(rng, U)
    nc = rng.uniform(-30, 5, L)
    k = int(rng.integers(0, U))
    E2 = E.copy()
    E2[k] *= factor
    c1 = lp_redispatch(E, P, P, eta, eta, start, lo, np.ones(U), nc)
    c2 = lp_redispatch(E2, P, P, eta, eta, start, lo, np.ones(U), nc)
    assert c2 <= c1 + 1e-5
    mk = lambda Es: [GesUnit(f"u{i}", Es[i], P[i], P[i], eta_c=eta[i], eta_d=eta[i],
                             diu=DiuBounds.constant(lo[i], 1.0)) for i in range(U)]
    ours1 = re_dispatch(mk(E), nc, start).curtailment.sum()
    ours2 = re_dispatch(mk(E2), nc, start).curtailment.sum()
    assert ours2 <= ours1 + 1e-5


# ------------------------------------------------------------- recovery

def test_recovery_examples():
    u = GesUnit("u", 10.0, 10.0, 10.0, eta_c=0.9, eta_d=0.9)
    assert recovery_step(u, 0.3, 0.5, 1.0) == pytest.approx((1.0, 0.0))
    assert recovery_step(u, 0.5, 0.5, 1.0) == pytest.approx((0.0, 0.0))
    assert recovery_step(u, 0.7, 0.5, 0.0) == pytest.approx((0.0, 1.8))
    assert recovery_step(u, 0.3, 0.5, 1.0, available=False) == (0.0, 0.0)


def test_classify():
    assert classify(-1.0, [0.0]) is Regime.EMERGENCY
    assert classify(1.0, [0.0]) is Regime.NORMAL
    # delta is PD minus RD, positive when the unit is below its plan
    assert classify(1.0, [0.2]) is Regime.RECOVERY


# ------------------------------------------------------------- coordination

def _day(units, prices):
    pds = [pre_dispatch(u, prices) for u in units]
    s = DispatchSchedule.empty(len(units), len(prices))
    for i, p in enumerate(pds):
        s.p_charge[i], s.p_discharge[i], s.soc[i] = p.p_charge[0], p.p_discharge[0], p.soc[0]
    return s


PRICES = [20, 20, 30, 60, 80, 60, 30, 20] * 3


@pytest.mark.parametrize("method", list(Method))
def test_no_deficit_copies_pd(method):
    u = _unit(E=40.0, P=10.0, eta=0.9, withhold=0.2, soc0=0.8)
    pd = _day([u], PRICES)
    res = coordinate([u], pd, np.full(24, 100.0), method)
    np.testing.assert_array_equal(res.schedule.soc, pd.soc)
    assert not res.calls and (res.regime == Regime.NORMAL).all()


def test_single_deficit_window_and_recovery():
    u = _unit(E=40.0, P=10.0, eta=0.9, withhold=0.2, soc0=0.8)
    pd = _day([u], PRICES)
    nc = np.full(24, 50.0)
    nc[10:13] = -8.0
    res = coordinate([u], pd, nc, "M3")
    assert len(res.calls) == 1
    c = res.calls[0]
    assert (c.t_s, c.t_e) == (10, 12) and c.t_e - c.t_s == 2
    assert (res.regime[10:13] == Regime.EMERGENCY).all()
    assert res.schedule.soc[0, 13] < pd.soc[0, 13]
    assert res.regime[13] == Regime.RECOVERY
    # recovery closes the gap; afterwards RD follows PD again
    gap = np.abs(res.schedule.soc[0] - pd.soc[0])
    merged = int(np.flatnonzero(gap[14:] <= 1e-9)[0]) + 14
    assert np.all(gap[merged:] <= 1e-9)
    assert (res.regime[merged:] == Regime.NORMAL).all()
    assert res.curtailment.sum() == pytest.approx(0.0, abs=1e-6)
    assert res.schedule.recurrence_residual([u]) <= 1e-9
