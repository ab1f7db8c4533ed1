import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccrcos.instruments import (
    FOREIGN,
    PricingCounter,
    ScheduleError,
    build_trade,
    naive_value_grid,
    portfolio_value_grid,
    schedule,
    value_trade,
)
from ccrcos.model import DOMESTIC, usd_jpy_params, state_distribution, zcb_price
from ccrcos.portfolio import GeneratorSpec, Portfolio, generate, partition_counterparty
from ccrcos.quadrature import tensor_grid

ORIGIN = np.array([0.0, 0.0, np.log(105.0)])


def _par(curve, dates):
    d = np.asarray(dates)
    df = curve.discount(d)
    return (df[0] - df[-1]) / np.sum(np.diff(d) * df[1:])


def test_schedule_front_stub():
    np.testing.assert_allclose(schedule(0.0, 2.5, "annual"), [0.0, 0.5, 1.5, 2.5])
    np.testing.assert_allclose(schedule(1.0, 2.0, "quarterly"), [1.0, 1.25, 1.5, 1.75, 2.0])


@pytest.mark.parametrize("args", [(0.0, 1.0, "monthly"), (2.0, 1.0, "annual"), (-1.0, 1.0, "annual")])
def test_schedule_rejects(args):
    with pytest.raises(ScheduleError):
        schedule(*args)


def test_par_swap_worth_zero_today(params):
    dates = schedule(0.0, 7.3, "semiannual")
    K = _par(params.curve_d, dates)
    trade = build_trade("IRS", {"notional": 1000.0, "fixed_rate": K, "start": 0.0,
                                "maturity": 7.3, "frequency": "semiannual"})
    assert abs(value_trade(trade, params, 0.0, ORIGIN)) < 1e-10


def test_fx_forward_at_covered_parity(params):
    T = 4.0
    fwd = 105.0 * np.exp(-0.05 * T) / np.exp(-0.02 * T)
    trade = build_trade("FXForward", {"notional": 105.0, "leg_notional": 1.0, "fx_rate": fwd,
                                      "start": 0.0, "maturity": T})
    assert abs(value_trade(trade, params, 0.0, ORIGIN)) < 1e-12
    # mid-life: X P_f - K P_d under the state
    state = np.array([0.01, -0.02, np.log(98.0)])
    expected = 98.0 * zcb_price(params, FOREIGN, 1.5, T, -0.02) - fwd * zcb_price(params, DOMESTIC, 1.5, T, 0.01)
    assert value_trade(trade, params, 1.5, state) == pytest.approx(expected, rel=1e-14)


def test_par_ccs_worth_zero_today(params):
    dates = schedule(0.0, 5.0, "annual")
    trade = build_trade("CCS", {"notional": 1050.0, "leg_notional": 10.0, "fx_rate": 105.0,
                                "fixed_rate": _par(params.curve_d, dates),
                                "fixed_rate_foreign": _par(params.curve_f, dates),
                                "start": 0.0, "maturity": 5.0})
    assert abs(value_trade(trade, params, 0.0, ORIGIN)) < 1e-10


def test_fra_forward_start_and_accrual(params):
    Ts, Tm, K, N = 2.0, 2.5, 0.03, 1000.0
    trade = build_trade("FRA", {"notional": N, "fixed_rate": K, "start": Ts, "maturity": Tm})
    P = params.curve_d.discount
    # before the reset: N (P(t,Ts) - (1 + K tau) P(t,Tm))
    x = 0.004
    expected = N * (zcb_price(params, DOMESTIC, 1.0, Ts, x) - (1 + K * 0.5) * zcb_price(params, DOMESTIC, 1.0, Tm, x))
    assert value_trade(trade, params, 1.0, [x, 0, 0]) == pytest.approx(expected, rel=1e-13)
    # accruing: coupon fixed at the initial-curve forward
    growth = P(Ts) / P(Tm)
    expected = N * (growth - 1 - K * 0.5) * zcb_price(params, DOMESTIC, 2.2, Tm, x)
    assert value_trade(trade, params, 2.2, [x, 0, 0]) == pytest.approx(expected, rel=1e-13)
    assert value_trade(trade, params, 2.6, [x, 0, 0]) == 0.0


def test_receiver_mirrors_payer(params):
    terms = {"notional": 800.0, "fixed_rate": 0.025, "start": 0.0, "maturity": 6.0, "currencies": [FOREIGN],
             "leg_notional": 800.0 / 105}
    pay = build_trade("IRS", terms)
    rec = build_trade("IRS", {**terms, "payer": False})
    state = np.array([[0.0, 0.01, np.log(103)], [0.0, -0.01, np.log(110)]])
    np.testing.assert_allclose(value_trade(rec, params, 2.3, state), -value_trade(pay, params, 2.3, state), rtol=1e-15)


def test_foreign_leg_converted_with_fx(params):
    trade = build_trade("IRS", {"notional": 500.0, "fixed_rate": 0.05, "start": 0.0, "maturity": 3.0,
                                "currencies": [FOREIGN], "leg_notional": 5.0})
    v1 = value_trade(trade, params, 1.0, [0.0, 0.0, np.log(100.0)])
    v2 = value_trade(trade, params, 1.0, [0.0, 0.0, np.log(200.0)])
    assert v2 == pytest.approx(2 * v1, rel=1e-14)


@pytest.mark.parametrize("terms", [
    {"kind": "Swaption"},
    {"kind": "IRS", "frequency": "weekly"},
    {"kind": "IRS", "start": 5.0, "maturity": 4.0},
    {"kind": "FRA", "currencies": [DOMESTIC, FOREIGN]},
])
def test_build_trade_rejects(terms):
    base = {"notional": 100.0, "fixed_rate": 0.01, "start": 0.0, "maturity": 2.0}
    base.update(terms)
    with pytest.raises(ScheduleError):
        build_trade(base.pop("kind"), base)


@pytest.mark.parametrize("t", [0.01, 3.7, 9.9])
def test_grid_matches_naive_valuation(params, small_portfolio, t):
    pf = partition_counterparty(small_portfolio, "by_contract_type")
    grid, dist = tensor_grid(12), state_distribution(params, t)
    V = portfolio_value_grid(pf, params, t, grid, dist)
    ref = naive_value_grid(pf, params, t, grid, dist)
    assert V.shape == (len(pf.netting_set_ids), 12, 12, 12)
    assert np.max(np.abs(V - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 14.0))
def test_grid_matches_naive_property(seed, t):
    params = usd_jpy_params()
    pf = generate(GeneratorSpec(n_trades=10, seed=seed), params)
    grid, dist = tensor_grid(6), state_distribution(params, t)
    V = portfolio_value_grid(pf, params, t, grid, dist)
    ref = naive_value_grid(pf, params, t, grid, dist)
    assert np.max(np.abs(V - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_pricing_call_count(params, portfolio100):
    J, t = 20, 3.0
    counter = PricingCounter()
    portfolio_value_grid(portfolio100, params, t, tensor_grid(J), state_distribution(params, t), counter)
    N_d, N_f = portfolio100.leg_counts()
    assert counter.calls == N_d * J + N_f * J**2


def test_expired_portfolio_is_worthless(params):
    pf = Portfolio((build_trade("FXForward", {"notional": 100.0, "leg_notional": 1.0, "fx_rate": 100.0,
                                              "start": 0.0, "maturity": 1.0}),))
    grid, dist = tensor_grid(5), state_distribution(params, 2.0)
    assert np.all(portfolio_value_grid(pf, params, 2.0, grid, dist) == 0.0)


def test_grid_rejects_mismatched_date(params, small_portfolio):
    with pytest.raises(ValueError):
        portfolio_value_grid(small_portfolio, params, 1.0, tensor_grid(5), state_distribution(params, 2.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 16.0))
def test_compiled_schedule_matches_leg_flows(seed, t):
    params = usd_jpy_params()
    pf = generate(GeneratorSpec(n_trades=8, seed=seed), params)
    for currency in ("domestic", "foreign"):
        curve = params.factor(currency)[2]
        T, A, _ = pf.compiled_schedules[currency].flows_at(t, curve)
        per_leg = [leg.flows_at(t, curve) for tr in pf.trades for leg in tr.legs if leg.currency == currency]
        T_ref = np.concatenate([f[0] for f in per_leg] + [np.empty(0)])
        A_ref = np.concatenate([f[1] for f in per_leg] + [np.empty(0)])
        key, key_ref = np.lexsort((A, T)), np.lexsort((A_ref, T_ref))
        np.testing.assert_array_equal(T[key], T_ref[key_ref])
        np.testing.assert_allclose(A[key], A_ref[key_ref], rtol=1e-15)
