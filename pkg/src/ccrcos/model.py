"""Hull-White (G1++) domestic/foreign short rates with a GBM FX rate.

State vector at an exposure date ``t`` is ``[x_d(t), x_f(t), log X(t)]``.
Its law is Gaussian in closed form, so ``state_distribution`` returns the
exact mean, per-factor standard deviations and the correlation of the
normalised factors together with a lower-triangular factor ``chol``::

    state = mean + scale * (chol @ z),   z ~ N(0, I_3)

Zero-coupon bonds are priced with the shifted Hull-White closed form

    P(t, T) = A(t, T) * exp(-B(t, T) * x(t))

which reproduces the initial discount curve at ``t = 0, x = 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

DOMESTIC = "domestic"
FOREIGN = "foreign"
CURRENCIES = (DOMESTIC, FOREIGN)

DEGENERATE_SCALE = 1e-14


class ModelError(ValueError):
    """Raised for invalid model parameters or pricing arguments."""


@dataclass(frozen=True)
class DiscountCurve:
    """Initial discount curve ``P^M(0, T)``.

    Either a flat continuously compounded ``flat_rate`` or a table of
    ``(tenors, dfs)`` interpolated log-linearly.  The node ``(0, 1)`` is
    implied; beyond the last tenor the last segment's zero rate is held.
    """

    flat_rate: Optional[float] = None
    tenors: tuple = ()
    dfs: tuple = ()

    def __post_init__(self):
        if self.flat_rate is None:
            if len(self.tenors) == 0 or len(self.tenors) != len(self.dfs):
                raise ModelError("tabulated curve needs matching non-empty tenors and dfs")
            t = np.asarray(self.tenors, dtype=float)
            d = np.asarray(self.dfs, dtype=float)
            if np.any(t <= 0) or np.any(np.diff(t) <= 0):
                raise ModelError("curve tenors must be positive and strictly increasing")
            if np.any(d <= 0) or not np.all(np.isfinite(d)):
                raise ModelError("discount factors must be positive and finite")
            object.__setattr__(self, "tenors", tuple(float(v) for v in t))
            object.__setattr__(self, "dfs", tuple(float(v) for v in d))
        elif not np.isfinite(self.flat_rate):
            raise ModelError("flat_rate must be finite")

    @classmethod
    def flat(cls, rate: float) -> "DiscountCurve":
        return cls(flat_rate=float(rate))

    def discount(self, T):
        """Discount factor(s) ``P^M(0, T)`` for scalar or array ``T >= 0``."""
        T = np.asarray(T, dtype=float)
        if self.flat_rate is not None:
            return np.exp(-self.flat_rate * T)
        grid = np.concatenate(([0.0], self.tenors))
        logdf = np.concatenate(([0.0], np.log(self.dfs)))
        out = np.interp(T, grid, logdf)
        beyond = T > grid[-1]
        if np.any(beyond):
            slope = (logdf[-1] - logdf[-2]) / (grid[-1] - grid[-2])
            out = np.where(beyond, logdf[-1] + slope * (T - grid[-1]), out)
        return np.exp(out)

    def to_dict(self) -> dict:
        if self.flat_rate is not None:
            return {"flat_rate": self.flat_rate}
        return {"tenors": list(self.tenors), "dfs": list(self.dfs)}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscountCurve":
        if "flat_rate" in d:
            if set(d) != {"flat_rate"}:
                raise ModelError(f"unexpected curve keys: {sorted(d)}")
            return cls.flat(d["flat_rate"])
        if set(d) != {"tenors", "dfs"}:
            raise ModelError(f"curve must be {{flat_rate}} or {{tenors, dfs}}, got {sorted(d)}")
        return cls(tenors=tuple(d["tenors"]), dfs=tuple(d["dfs"]))


def correlation_matrix(rho_df: float, rho_dX: float, rho_fX: float) -> np.ndarray:
    return np.array(
        [[1.0, rho_df, rho_dX], [rho_df, 1.0, rho_fX], [rho_dX, rho_fX, 1.0]]
    )


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the three-factor Hull-White/GBM model.

    ``x_d0`` and ``x_f0`` are the initial values of the shifted short rates
    (zero in the calibrated model); they exist so that sensitivities can be
    computed by shocking them.
    """

    a_d: float
    a_f: float
    sigma_d: float
    sigma_f: float
    sigma_X: float
    mu_X: float
    rho_df: float
    rho_dX: float
    rho_fX: float
    X0: float
    curve_d: DiscountCurve = field(default_factory=lambda: DiscountCurve.flat(0.0))
    curve_f: DiscountCurve = field(default_factory=lambda: DiscountCurve.flat(0.0))
    x_d0: float = 0.0
    x_f0: float = 0.0

    def __post_init__(self):
        if not (self.a_d > 0 and self.a_f > 0):
            raise ModelError("mean-reversion speeds must be positive")
        if not (self.sigma_d > 0 and self.sigma_f > 0 and self.sigma_X > 0):
            raise ModelError("volatilities must be positive")
        if not self.X0 > 0:
            raise ModelError("X0 must be positive")
        for name in ("rho_df", "rho_dX", "rho_fX"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise ModelError(f"{name} must lie in [-1, 1]")
        eig = np.linalg.eigvalsh(self.correlation)
        if eig.min() < -1e-12:
            raise ModelError("correlation matrix is not positive semi-definite")

    @property
    def correlation(self) -> np.ndarray:
        return correlation_matrix(self.rho_df, self.rho_dX, self.rho_fX)

    def factor(self, currency: str):
        """``(a, sigma, curve, x0)`` for the short rate of ``currency``."""
        if currency == DOMESTIC:
            return self.a_d, self.sigma_d, self.curve_d, self.x_d0
        if currency == FOREIGN:
            return self.a_f, self.sigma_f, self.curve_f, self.x_f0
        raise ModelError(f"unknown currency {currency!r}")

    def shifted(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {
            k: getattr(self, k)
            for k in ("a_d", "a_f", "sigma_d", "sigma_f", "sigma_X", "mu_X",
                      "rho_df", "rho_dX", "rho_fX", "X0")
        }
        d["curve_d"] = self.curve_d.to_dict()
        d["curve_f"] = self.curve_f.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        expected = {"a_d", "a_f", "sigma_d", "sigma_f", "sigma_X", "mu_X",
                    "rho_df", "rho_dX", "rho_fX", "X0", "curve_d", "curve_f"}
        if set(d) != expected:
            missing = sorted(expected - set(d))
            extra = sorted(set(d) - expected)
            raise ModelError(f"model keys mismatch: missing={missing} extra={extra}")
        kw = {k: float(v) for k, v in d.items() if not k.startswith("curve")}
        return cls(curve_d=DiscountCurve.from_dict(d["curve_d"]),
                   curve_f=DiscountCurve.from_dict(d["curve_f"]), **kw)


def usd_jpy_params() -> ModelParams:
    """USD (domestic) / JPY (foreign) test setup used throughout the tests."""
    return ModelParams(
        a_d=0.01, a_f=0.05, sigma_d=0.007, sigma_f=0.012, sigma_X=0.02,
        mu_X=0.008, rho_df=0.25, rho_dX=-0.15, rho_fX=-0.15, X0=105.0,
        curve_d=DiscountCurve.flat(0.02), curve_f=DiscountCurve.flat(0.05),
    )


def load_model(path) -> ModelParams:
    with open(path) as fh:
        return ModelParams.from_dict(json.load(fh))


def save_model(params: ModelParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2) + "\n")


def psd_cholesky(corr: np.ndarray, eps: float = 1e-13) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == corr`` for PSD ``corr``.

    Falls back to an outer-product factorisation that zeroes the column of
    any (numerically) vanishing pivot, so singular correlations such as
    ``rho = 1`` still yield a factor in the original variable order.
    """
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    n = corr.shape[0]
    A = np.array(corr, dtype=float)
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= eps:
            continue
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (A[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass(frozen=True)
class StateDistribution:
    """Exact Gaussian law of ``[x_d, x_f, log X]`` at time ``t``."""

    t: float
    mean: np.ndarray
    scale: np.ndarray
    corr: np.ndarray
    chol: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.t == 0 or bool(np.any(self.scale < DEGENERATE_SCALE))

    @property
    def covariance(self) -> np.ndarray:
        return self.corr * np.outer(self.scale, self.scale)

    def states(self, z: np.ndarray) -> np.ndarray:
        """Map independent standard normals ``z[..., 3]`` to states."""
        return self.mean + (z @ self.chol.T) * self.scale


def _ou_variance(a: float, t: float) -> float:
    # int_0^t exp(-2a(t-s)) ds
    return -np.expm1(-2.0 * a * t) / (2.0 * a)


def state_distribution(params: ModelParams, t: float) -> StateDistribution:
    """Exact time-``t`` distribution of the state vector."""
    if t < 0:
        raise ModelError("exposure date must be non-negative")
    t = float(t)
    p = params
    mean = np.array([
        p.x_d0 * np.exp(-p.a_d * t),
        p.x_f0 * np.exp(-p.a_f * t),
        np.log(p.X0) + (p.mu_X - 0.5 * p.sigma_X**2) * t,
    ])
    if t == 0.0:
        corr = p.correlation
        return StateDistribution(t, mean, np.zeros(3), corr, psd_cholesky(corr))

    v_d = _ou_variance(p.a_d, t)
    v_f = _ou_variance(p.a_f, t)
    scale = np.array([p.sigma_d * np.sqrt(v_d), p.sigma_f * np.sqrt(v_f),
                      p.sigma_X * np.sqrt(t)])
    # Ito isometry on the stochastic integrals driving each factor
    c_df = p.rho_df * -np.expm1(-(p.a_d + p.a_f) * t) / ((p.a_d + p.a_f) * np.sqrt(v_d * v_f))
    c_dX = p.rho_dX * -np.expm1(-p.a_d * t) / (p.a_d * np.sqrt(v_d * t))
    c_fX = p.rho_fX * -np.expm1(-p.a_f * t) / (p.a_f * np.sqrt(v_f * t))
    corr = correlation_matrix(c_df, c_dX, c_fX)
    return StateDistribution(t, mean, scale, corr, psd_cholesky(corr))


def integrated_variance(a: float, sigma: float, tau):
    """Variance of ``int_t^{t+tau} x(s) ds`` conditional on ``x(t)``."""
    tau = np.asarray(tau, dtype=float)
    return (sigma / a) ** 2 * (
        tau + 2.0 * np.expm1(-a * tau) / a - np.expm1(-2.0 * a * tau) / (2.0 * a)
    )


def bond_coefficients(params: ModelParams, currency: str, t: float, T):
    """``(A(t, T), B(t, T))`` of the affine zero-coupon bond formula."""
    a, sigma, curve, _ = params.factor(currency)
    T = np.asarray(T, dtype=float)
    if np.any(T < t):
        raise ModelError("bond maturity precedes valuation date")
    tau = T - t
    B = -np.expm1(-a * tau) / a
    U = lambda s, e: integrated_variance(a, sigma, e - s)  # noqa: E731
    A = curve.discount(T) / curve.discount(t) * np.exp(
        0.5 * (U(t, T) - U(0.0, T) + U(0.0, t))
    )
    return A, B


def zcb_price(params: ModelParams, currency: str, t: float, T, x):
    """Zero-coupon bond price ``P(t, T)`` given short-rate state ``x``.

    ``T`` and ``x`` broadcast against each other.
    """
    A, B = bond_coefficients(params, currency, t, T)
    return A * np.exp(-B * np.asarray(x, dtype=float))


SHIFTS = {"x_d0": 1e-4, "x_f0": 1e-4, "X0": 0.01}


def shifted_models(params: ModelParams):
    """Forward-difference shocks: +1bp on each short rate, +1% on X0.

    Returns ``[(shocked_params, step), ...]`` ordered ``x_d0, x_f0, X0``.
    """
    return [
        (params.shifted(x_d0=params.x_d0 + SHIFTS["x_d0"]), SHIFTS["x_d0"]),
        (params.shifted(x_f0=params.x_f0 + SHIFTS["x_f0"]), SHIFTS["x_f0"]),
        (params.shifted(X0=params.X0 * (1.0 + SHIFTS["X0"])), params.X0 * SHIFTS["X0"]),
    ]
