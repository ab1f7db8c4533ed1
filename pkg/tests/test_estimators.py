import numpy as np
import pytest
from scipy.stats import norm
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ccrcos import cos
from ccrcos.estimators import CosExposure, MonteCarloExposure
from ccrcos.instruments import Leg, Trade, build_trade, portfolio_value_grid
from ccrcos.mc import McConfig, deterministic_values, estimate_metrics, simulate_exposures
from ccrcos.model import DOMESTIC, bond_coefficients, usd_jpy_params, state_distribution
from ccrcos.portfolio import GeneratorSpec, Portfolio, generate, partition_counterparty
from ccrcos.quadrature import tensor_grid

T_MID = 7.4


def test_estimator_params_round_trip():
    est = CosExposure(n_terms=48, level="counterparty")
    assert est.get_params()["n_terms"] == 48
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    est.set_params(n_quad=24)
    assert est.n_quad == 24
    assert MonteCarloExposure(n_sim=2000).get_params()["n_sim"] == 2000


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        CosExposure().pfe()
    with pytest.raises(NotFittedError):
        MonteCarloExposure().sensitivities()


@pytest.mark.parametrize("kw", [{"n_terms": 0}, {"n_quad": 2}, {"alpha": 1.0}, {"level": "desk"},
                                {"tol": 0.6}, {"width": -1.0}])
def test_invalid_hyper_parameters(kw, small_portfolio, params):
    with pytest.raises((ValueError, TypeError)):
        CosExposure(**kw).fit(small_portfolio, params, 1.0)


def test_accepts_raw_records_and_dicts(small_portfolio, params):
    records = [t.to_dict() for t in small_portfolio.trades]
    a = CosExposure().fit(records, params.to_dict(), 2.0)
    b = CosExposure().fit(small_portfolio, params, 2.0)
    assert a.pfe_ == b.pfe_


def test_today_is_deterministic(portfolio100, params):
    est = CosExposure().fit(portfolio100, params, 0.0)
    V0 = est.netting_[0].constant
    assert est.pfe_status_ == ["degenerate"]
    assert est.pfe_ == est.ee_ == max(V0, 0.0)
    mc = MonteCarloExposure(n_sim=1000).fit(portfolio100, params, 0.0)
    assert mc.pfe_ == pytest.approx(est.pfe_, rel=1e-14)
    assert mc.ee_ == est.ee_ and mc.ee_se_ == 0.0


def _moments(portfolio, params, t, J):
    g = tensor_grid(J)
    return cos.exposure_moments(portfolio_value_grid(portfolio, params, t, g, state_distribution(params, t))[0], g)


def test_moment_pass_is_converged(portfolio100, params, t_half):
    ref = _moments(portfolio100, params, t_half, 130)
    got = _moments(portfolio100, params, t_half, 40)
    assert [f"{v:.6g}" for v in got] == [f"{v:.6g}" for v in ref]


def test_coarse_moment_pass_is_good_enough_for_the_support(portfolio100, params, t_half):
    """The default 20-node pass pins the mean to 6 digits but the spread only
    to about 1e-4, which moves an 8-sigma support end by far less than the
    width margin."""
    (m20, s20), (m130, s130) = (_moments(portfolio100, params, t_half, J) for J in (20, 130))
    assert f"{m20:.6g}" == f"{m130:.6g}"
    assert s20 == pytest.approx(s130, rel=1e-4)


def test_support_width_insensitivity(portfolio100, params, t_half):
    p8 = CosExposure(n_terms=64, n_quad=60, width=8.0).fit(portfolio100, params, t_half).pfe_
    p10 = CosExposure(n_terms=80, n_quad=60, width=10.0).fit(portfolio100, params, t_half).pfe_
    assert p10 == pytest.approx(p8, rel=1e-6)


def test_frozen_reference_pfe(portfolio100, params, t_half):
    """Production settings on the seeded book, frozen from a verified run."""
    est = CosExposure().fit(portfolio100, params, t_half)
    assert est.pfe_ == pytest.approx(1913.3641762909, rel=1e-10)
    assert est.ee_ == pytest.approx(1258.67334132, rel=1e-8)


def test_cdf_reaches_one_at_support_end(portfolio100, params, t_half):
    est = CosExposure(n_terms=64, n_quad=60).fit(portfolio100, params, t_half)
    b = est.netting_[0].support.b
    assert abs(est.cdf(b) - 1.0) < 1e-6
    assert est.cdf(-1.0) == 0.0 and est.cdf(0.0) == 0.0


def test_ee_closed_form_matches_density_quadrature(portfolio100, params, t_half):
    est = CosExposure(n_terms=64, n_quad=60).fit(portfolio100, params, t_half)
    exp = est.netting_[0].expansion
    lo, hi = max(exp.support.a, 0.0), exp.support.b
    e = np.linspace(lo, hi, 200_001)
    f = e * exp.pdf(e)
    direct = np.sum((f[1:] + f[:-1]) * np.diff(e)) / 2
    assert cos.ee(exp) == pytest.approx(direct, rel=1e-8)


def test_single_set_routes_agree(portfolio100, params, t_half):
    net = CosExposure(n_terms=64, n_quad=60).fit(portfolio100, params, t_half)
    cp = CosExposure(n_terms=500, n_quad=60, level="counterparty").fit(portfolio100, params, t_half)
    assert abs(cp.pfe_ - net.pfe_) < 1e-4 * portfolio100.total_notional
    assert cp.ee_ == pytest.approx(net.ee_, rel=1e-7)


def test_counterparty_sensitivity_is_sum_over_sets(counterparty100, params):
    est = CosExposure(level="counterparty").fit(counterparty100, params, 5.0)
    per_set = est.sensitivities()
    assert per_set.shape == (4, 3)
    again = CosExposure(level="netting").fit(counterparty100, params, 5.0)
    np.testing.assert_array_equal(again.sensitivities(), per_set)
    assert est.ee_ == float(est.netting_ee_.sum())


def test_domestic_book_has_no_foreign_sensitivity(params):
    pf = generate(GeneratorSpec(n_trades=15, seed=11, kinds=("IRS", "FRA")), params)
    dom = Portfolio(tuple(t for t in pf.trades if t.currencies == [DOMESTIC]))
    sens = CosExposure().fit(dom, params, 3.0).sensitivities()
    assert sens[0, 1] == 0.0 and sens[0, 2] == 0.0
    assert sens[0, 0] != 0.0


def test_single_bond_law(params):
    """One domestic zero-coupon flow: exposure is a monotone map of x_d."""
    T, N, t = 6.0, 100.0, 2.5
    bond = Portfolio((Trade("zcb", "IRS", (Leg(DOMESTIC, (T,), (N,)),), "NS1", N),))
    dist = state_distribution(params, t)
    A, B = bond_coefficients(params, DOMESTIC, t, T)
    m, s = dist.mean[0], dist.scale[0]
    quantile = lambda a: N * A * np.exp(-B * (m + s * norm.ppf(1 - a)))  # noqa: E731
    cdf = lambda v: norm.sf((-np.log(v / (N * A)) / B - m) / s)  # noqa: E731

    est = CosExposure(n_terms=64, n_quad=130).fit(bond, params, t)
    assert est.pfe_ == pytest.approx(quantile(0.975), rel=1e-8)
    paths = simulate_exposures(bond, params, t, McConfig(n_sim=400_000, seed=2)).exposures[:, 0]
    v = np.sort(paths)
    ecdf = np.arange(1, v.size + 1) / v.size
    dkw = np.sqrt(np.log(2 / 0.01) / (2 * v.size))
    assert np.max(np.abs(ecdf - cdf(v))) < dkw


def test_zero_volatility_paths_are_deterministic(small_portfolio):
    flat = usd_jpy_params().shifted(sigma_d=1e-12, sigma_f=1e-12, sigma_X=1e-12)
    est = MonteCarloExposure(n_sim=2000, seed=1).fit(small_portfolio, flat, 4.0)
    det = deterministic_values(small_portfolio, flat, 4.0)
    np.testing.assert_allclose(est.values_, np.broadcast_to(det, est.values_.shape), rtol=1e-8)


def test_standard_error_scaling(small_portfolio, params):
    se = [MonteCarloExposure(n_sim=n, seed=3).fit(small_portfolio, params, 3.0).ee_se_ for n in (50_000, 200_000)]
    assert se[1] / se[0] == pytest.approx(0.5, rel=0.2)


def test_uniform_quantile():
    rng = np.random.default_rng(8)
    res = estimate_metrics(rng.uniform(size=1_000_000), 0.975)
    assert res.pfe_band[0] <= 0.975 <= res.pfe_band[1]
    assert res.pfe_hat == pytest.approx(0.975, abs=5e-4)


def test_constant_paths():
    res = estimate_metrics(np.full(5000, 3.5))
    assert res.pfe_hat == res.ee_hat == 3.5 and res.ee_se == 0.0


@pytest.fixture(scope="module")
def mc_mid(portfolio100, params):
    return simulate_exposures(portfolio100, params, T_MID, McConfig(n_sim=1_000_000, seed=2024))


def test_netting_cdf_within_dkw_band(portfolio100, params, mc_mid):
    est = CosExposure().fit(portfolio100, params, T_MID)
    v = np.sort(mc_mid.exposures[:, 0])
    grid = np.quantile(v, np.linspace(0.001, 0.999, 400))
    ecdf = np.searchsorted(v, grid, side="right") / v.size
    dkw = np.sqrt(np.log(2 / 0.05) / (2 * v.size))
    assert np.max(np.abs(est.cdf(grid) - ecdf)) < 4 * dkw


def test_netting_ee_within_three_se(portfolio100, params, mc_mid):
    est = CosExposure().fit(portfolio100, params, T_MID)
    res = estimate_metrics(mc_mid.exposures[:, 0])
    assert abs(est.ee_ - res.ee_hat) < 3 * res.ee_se


def test_counterparty_cdf_within_three_se(counterparty100, params):
    paths = simulate_exposures(counterparty100, params, T_MID, McConfig(n_sim=1_000_000, seed=77)).counterparty
    # the order-2 filter smooths the CDF by a width ~ (b-a)/K; resolving it to
    # MC precision at 1e6 paths takes about a thousand terms
    est = CosExposure(n_terms=1000, n_quad=110, level="counterparty").fit(counterparty100, params, T_MID)
    v = np.sort(paths)
    grid = np.quantile(v, [0.1, 0.25, 0.5, 0.75, 0.9, 0.975])
    ecdf = np.searchsorted(v, grid, side="right") / v.size
    se = np.sqrt(ecdf * (1 - ecdf) / v.size)
    assert np.all(np.abs(est.cdf(grid) - ecdf) < 3 * se), (est.cdf(grid) - ecdf) / se


def test_partitioned_counterparty_shape(counterparty100, params):
    est = CosExposure(level="counterparty").fit(counterparty100, params, 5.0)
    assert est.netting_set_ids_ == ["CCS", "FRA", "FXForward", "IRS"]
    assert est.supports_["counterparty"].a == 0.0
    assert est.pfe_ >= 0 and est.ee_ >= 0
    assert partition_counterparty(counterparty100, "single_netting_set").netting_set_ids == ["NS1"]
    with pytest.raises(ValueError):
        est.cdf(1.0, netting_set=None) if False else CosExposure().fit(counterparty100, params, 5.0).cdf(1.0)


def test_build_trade_smoke(params):
    t = build_trade("FXForward", {"notional": 105.0, "leg_notional": 1.0, "fx_rate": 100.0, "start": 0.0,
                                  "maturity": 2.0})
    est = CosExposure().fit(Portfolio((t,)), params, 1.0)
    assert est.pfe_ > est.ee_ > 0
