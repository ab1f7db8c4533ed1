"""Estimator front-ends for the COS engine and the Monte Carlo oracle.

Both follow the scikit-learn conventions: hyper-parameters are stored
verbatim in ``__init__`` (so ``get_params``/``set_params``/``clone`` work),
``fit`` takes the data -- here a portfolio, a model and an exposure date --
and fitted state lives in trailing-underscore attributes.

    >>> est = CosExposure(n_terms=32, n_quad=40).fit(portfolio, model, t=7.4)
    >>> est.pfe_, est.ee_
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import cos
from .cos import COUNTERPARTY, NETTING, CosExpansion, CosSupport, SpectralFilter
from .instruments import PricingCounter, portfolio_value_grid
from .mc import (
    McConfig,
    deterministic_ee_sensitivities,
    deterministic_values,
    estimate_metrics,
    mc_ee_sensitivities,
    simulate_exposures,
)
from .model import shifted_models, state_distribution
from .quadrature import tensor_grid
from .validation import check_alpha, check_date, check_model, check_portfolio, check_positive_int

LEVELS = (NETTING, COUNTERPARTY)


@dataclass
class NettingFit:
    """Recovered law of one netting set's MtM (or its constant value)."""

    netting_set: str
    expansion: Optional[CosExpansion] = None
    constant: Optional[float] = None

    @property
    def support(self) -> Optional[CosSupport]:
        return None if self.expansion is None else self.expansion.support

    def cdf(self, e):
        e = np.asarray(e, dtype=float)
        if self.expansion is None:
            return np.where(e >= max(self.constant, 0.0), 1.0, 0.0)
        return cos.cdf_netting(self.expansion, e)

    def pfe(self, alpha: float) -> cos.PfeResult:
        if self.expansion is None:
            return cos.PfeResult(max(self.constant, 0.0), "degenerate")
        return cos.pfe_search(self.expansion, alpha)

    def ee(self) -> float:
        if self.expansion is None:
            return max(self.constant, 0.0)
        return cos.ee(self.expansion)


class CosExposure(BaseEstimator):
    """Exposure distribution at one date recovered by cosine expansion.

    Parameters
    ----------
    n_terms : int
        Number of expansion terms ``K``.
    n_quad : int
        Clenshaw-Curtis points per state dimension for the ch.f.
    n_quad_moments : int
        Points per dimension for the moment pass that sizes the support.
    tol : float
        Tail probability cut from each side of every integration variable.
    width : float
        Support half-width in standard deviations (``L``).
    alpha : float
        PFE confidence level.
    level : {"netting", "counterparty"}
        ``netting`` expands each netting set's unfloored MtM; ``counterparty``
        expands the gross sum of floored netting-set exposures with a filter.
    filter_order : int
        Order ``p`` of the exponential filter used at counterparty level.
    """

    def __init__(self, n_terms=32, n_quad=40, n_quad_moments=20, tol=1e-12, width=8.0,
                 alpha=0.975, level="netting", filter_order=2):
        self.n_terms = n_terms
        self.n_quad = n_quad
        self.n_quad_moments = n_quad_moments
        self.tol = tol
        self.width = width
        self.alpha = alpha
        self.level = level
        self.filter_order = filter_order

    def _validate_params(self):
        check_positive_int(self.n_terms, "n_terms", minimum=1)
        check_positive_int(self.n_quad, "n_quad", minimum=3)
        check_positive_int(self.n_quad_moments, "n_quad_moments", minimum=3)
        check_alpha(self.alpha)
        if not 0 < self.tol < 0.5:
            raise ValueError("tol must lie in (0, 0.5)")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")

    def fit(self, portfolio, model, t, supports=None, counter: Optional[PricingCounter] = None):
        """Recover the exposure law at date ``t``.

        ``supports`` optionally pins the expansion intervals (a mapping from
        netting-set id, or ``"counterparty"``, to ``CosSupport``); used to
        keep the interval fixed across shocked revaluations.
        """
        self._validate_params()
        portfolio = check_portfolio(portfolio)
        model = check_model(model)
        t = check_date(t)
        supports = supports or {}
        self.portfolio_, self.model_, self.t_ = portfolio, model, t
        self.netting_set_ids_ = portfolio.netting_set_ids
        self.filter_ = SpectralFilter(self.filter_order)
        dist = state_distribution(model, t)

        if dist.degenerate:
            V0 = deterministic_values(portfolio, model, t)
            self.netting_ = [NettingFit(s, constant=float(v)) for s, v in zip(self.netting_set_ids_, V0)]
            self.counterparty_ = None
            self.counterparty_constant_ = float(np.maximum(V0, 0.0).sum())
            return self._finish()

        grid = tensor_grid(self.n_quad, self.tol)
        V = portfolio_value_grid(portfolio, model, t, grid, dist, counter)
        need_moments = any(s not in supports for s in self.netting_set_ids_) or (
            self.level == COUNTERPARTY and COUNTERPARTY not in supports)
        Vm = None
        if need_moments:
            mgrid = tensor_grid(self.n_quad_moments, self.tol)
            Vm = portfolio_value_grid(portfolio, model, t, mgrid, dist)

        self.netting_ = []
        for i, s in enumerate(self.netting_set_ids_):
            sup = supports.get(s)
            if sup is None:
                mu, sigma = cos.exposure_moments(Vm[i], mgrid)
                if cos.is_degenerate(mu, sigma) or np.ptp(V[i]) == 0:
                    self.netting_.append(NettingFit(s, constant=float(V[i].flat[0])))
                    continue
                sup = cos.cos_support(mu, sigma, self.width)
            exp = cos.build_expansion(V[i], grid, sup, self.n_terms, None, NETTING)
            self.netting_.append(NettingFit(s, expansion=exp))

        self.counterparty_ = None
        self.counterparty_constant_ = None
        if self.level == COUNTERPARTY:
            E = np.maximum(V, 0.0).sum(axis=0)
            sup = supports.get(COUNTERPARTY)
            if sup is None:
                mu, sigma = cos.exposure_moments(np.maximum(Vm, 0.0).sum(axis=0), mgrid)
                if cos.is_degenerate(mu, sigma) or np.ptp(E) == 0:
                    self.counterparty_constant_ = float(E.flat[0])
                    return self._finish()
                sup = cos.cos_support(mu, sigma, self.width, floor_a_at_zero=True)
            self.counterparty_ = cos.build_expansion(E, grid, sup, self.n_terms, self.filter_, COUNTERPARTY)
        return self._finish()

    def _finish(self):
        self.netting_pfe_ = np.array([f.pfe(self.alpha).value for f in self.netting_])
        self.netting_ee_ = np.array([f.ee() for f in self.netting_])
        self.supports_ = {f.netting_set: f.support for f in self.netting_ if f.support is not None}
        if self.level == COUNTERPARTY:
            if self.counterparty_ is not None:
                self.supports_[COUNTERPARTY] = self.counterparty_.support
                res = cos.pfe_search(self.counterparty_, self.alpha)
                self.pfe_status_ = res.status
                self.pfe_ = res.value
            else:
                self.pfe_status_ = "degenerate"
                self.pfe_ = self.counterparty_constant_
            # EE is additive over netting sets, each expanded without the floor
            self.ee_ = float(self.netting_ee_.sum())
        else:
            self.pfe_status_ = [f.pfe(self.alpha).status for f in self.netting_]
            self.pfe_ = self.netting_pfe_ if len(self.netting_) > 1 else float(self.netting_pfe_[0])
            self.ee_ = self.netting_ee_ if len(self.netting_) > 1 else float(self.netting_ee_[0])
        return self

    def cdf(self, e, netting_set=None):
        """Exposure CDF at ``e`` for the fitted level (or one netting set)."""
        check_is_fitted(self, "netting_")
        if netting_set is not None or self.level == NETTING:
            key = netting_set if netting_set is not None else self._single_set()
            return self.netting_[self.netting_set_ids_.index(key)].cdf(e)
        if self.counterparty_ is None:
            return np.where(np.asarray(e, dtype=float) >= self.counterparty_constant_, 1.0, 0.0)
        return cos.cdf_counterparty(self.counterparty_, e)

    def _single_set(self):
        if len(self.netting_set_ids_) != 1:
            raise ValueError("several netting sets; pass netting_set=")
        return self.netting_set_ids_[0]

    def pfe(self, alpha=None):
        check_is_fitted(self, "netting_")
        alpha = self.alpha if alpha is None else check_alpha(alpha)
        if self.level == COUNTERPARTY:
            if self.counterparty_ is None:
                return self.counterparty_constant_
            return cos.pfe(self.counterparty_, alpha)
        out = np.array([f.pfe(alpha).value for f in self.netting_])
        return out if out.size > 1 else float(out[0])

    def sensitivities(self):
        """Forward-difference EE sensitivities per netting set.

        Returns an array ``(n_sets, 3)`` ordered ``d/dx_d0, d/dx_f0, d/dX0``;
        the counterparty figure is its column sum.  The shocked runs reuse
        the base expansion intervals.
        """
        check_is_fitted(self, "netting_")
        base = self.netting_ee_
        out = np.zeros((base.size, 3))
        shocked_est = CosExposure(**{**self.get_params(), "level": NETTING})
        for j, (shocked, h) in enumerate(shifted_models(self.model_)):
            shocked_est.fit(self.portfolio_, shocked, self.t_, supports=self.supports_)
            out[:, j] = (shocked_est.netting_ee_ - base) / h
        return out


class MonteCarloExposure(BaseEstimator):
    """Empirical exposure law from exactly sampled states.

    Parameters
    ----------
    n_sim : int
        Number of scenarios.
    seed : int
        Master seed; per-batch streams are split from it.
    batch_size : int
        Scenarios revalued per block.
    alpha : float
        PFE confidence level.
    level : {"netting", "counterparty"}
    """

    def __init__(self, n_sim=500_000, seed=12345, batch_size=50_000, alpha=0.975, level="netting"):
        self.n_sim = n_sim
        self.seed = seed
        self.batch_size = batch_size
        self.alpha = alpha
        self.level = level

    def fit(self, portfolio, model, t, counter: Optional[PricingCounter] = None):
        check_alpha(self.alpha)
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")
        portfolio = check_portfolio(portfolio)
        model = check_model(model)
        t = check_date(t)
        self.config_ = McConfig(int(self.n_sim), int(self.seed), int(self.batch_size))
        self.portfolio_, self.model_, self.t_ = portfolio, model, t
        self.netting_set_ids_ = portfolio.netting_set_ids
        if t == 0:
            V0 = deterministic_values(portfolio, model, t)
            self.values_ = np.broadcast_to(V0, (self.config_.n_sim, V0.size))
        else:
            self.values_ = simulate_exposures(portfolio, model, t, self.config_, counter).values
        E = np.maximum(self.values_, 0.0)
        self.netting_results_ = [estimate_metrics(E[:, i], self.alpha) for i in range(E.shape[1])]
        self.counterparty_result_ = estimate_metrics(E.sum(axis=1), self.alpha)
        if self.level == COUNTERPARTY or len(self.netting_results_) == 1:
            res = self.counterparty_result_ if self.level == COUNTERPARTY else self.netting_results_[0]
            self.result_ = res
            self.pfe_, self.ee_, self.ee_se_ = res.pfe_hat, res.ee_hat, res.ee_se
        else:
            self.result_ = None
            self.pfe_ = np.array([r.pfe_hat for r in self.netting_results_])
            self.ee_ = np.array([r.ee_hat for r in self.netting_results_])
            self.ee_se_ = np.array([r.ee_se for r in self.netting_results_])
        return self

    def sensitivities(self):
        """CRN finite-difference EE sensitivities ``(sens, se)`` per netting set."""
        check_is_fitted(self, "values_")
        if self.t_ == 0:
            return deterministic_ee_sensitivities(self.portfolio_, self.model_, self.t_)
        return mc_ee_sensitivities(self.portfolio_, self.model_, self.t_, self.config_)
