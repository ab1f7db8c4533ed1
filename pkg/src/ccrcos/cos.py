"""Fourier-cosine recovery of exposure distributions.

The characteristic function of a portfolio quantity ``Y`` (netting-set MtM
or counterparty exposure) is integrated on the normal tensor grid, sampled
at ``w_k = k*pi/(b-a)`` and turned into cosine coefficients ``A_k``.  The
CDF on ``[a, b]`` is then

    F(e) = A_0/2 (e - a) + sum_k s_k A_k (b-a)/(k pi) sin(k pi (e-a)/(b-a))

with ``s_k = 1`` (netting sets, expanded on the unfloored MtM and floored
afterwards) or ``s_k = sigma(k/K)`` for an exponential spectral filter
(counterparty level, where the flooring cannot be undone).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .quadrature import TensorGrid

log = logging.getLogger(__name__)

MACHINE_EPS = float(np.finfo(float).eps)
DEGENERATE_SIGMA = 1e-14
CLAMP_REPORT = 1e-6

NETTING = "netting"
COUNTERPARTY = "counterparty"


@dataclass(frozen=True)
class SpectralFilter:
    """Exponential filter ``sigma(eta) = exp(-alpha * eta**p)``."""

    p: int = 2
    alpha: float = -np.log(MACHINE_EPS)

    def __post_init__(self):
        if self.p <= 0 or self.p % 2:
            raise ValueError("filter order must be a positive even integer")

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        return np.exp(-self.alpha * np.abs(eta) ** self.p)


@dataclass(frozen=True)
class CosSupport:
    a: float
    b: float
    L: float = 8.0
    mu_E: float = float("nan")
    sigma_E: float = float("nan")

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty support [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a


def cos_support(mu_E: float, sigma_E: float, L: float = 8.0,
                floor_a_at_zero: bool = False) -> CosSupport:
    """``[mu - L*sigma, mu + L*sigma]``, with ``a = 0`` for floored targets."""
    if not sigma_E > 0:
        raise ValueError("sigma_E must be positive; degenerate laws bypass COS")
    a = 0.0 if floor_a_at_zero else mu_E - L * sigma_E
    return CosSupport(a, mu_E + L * sigma_E, L, mu_E, sigma_E)


def exposure_moments(values: np.ndarray, grid: TensorGrid):
    """Mean and standard deviation of grid values under the normal law."""
    W = grid.weight_tensor()
    mass = W.sum()
    mu = float(np.sum(W * values) / mass)
    var = float(np.sum(W * (values - mu) ** 2) / mass)
    return mu, float(np.sqrt(max(var, 0.0)))


def is_degenerate(mu_E: float, sigma_E: float) -> bool:
    return sigma_E < DEGENERATE_SIGMA * max(1.0, abs(mu_E))


def characteristic_function(values: np.ndarray, grid: TensorGrid, omegas,
                            reanchor: int = 32) -> np.ndarray:
    """``phi(w) = sum_ijk W_ijk exp(i w Y_ijk)`` for each frequency.

    Equally spaced frequencies starting at zero (the COS sampling) use the
    power recurrence ``z_k = z_{k-1} * z_1``, re-evaluated exactly every
    ``reanchor`` steps to bound round-off drift.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    W = grid.weight_tensor().reshape(-1).astype(complex)
    Y = np.asarray(values, dtype=float).reshape(-1)
    if Y.size != W.size:
        raise ValueError("values do not match the grid")
    out = np.empty(omegas.size, dtype=complex)
    d = omegas[1] - omegas[0] if omegas.size > 1 else 0.0
    regular = omegas.size > 2 and omegas[0] == 0.0 and np.allclose(
        np.diff(omegas), d, rtol=1e-13, atol=0.0)
    if not regular:
        for k, w in enumerate(omegas):
            out[k] = W @ np.exp(1j * w * Y)
        return out
    step = np.exp(1j * d * Y)
    z = None
    for k, w in enumerate(omegas):
        if k % reanchor == 0:
            z = np.exp(1j * w * Y)
        else:
            z *= step
        out[k] = W @ z
    return out


def frequencies(support: CosSupport, K: int) -> np.ndarray:
    return np.arange(K + 1) * np.pi / support.width


def cos_coefficients(phi, support: CosSupport) -> np.ndarray:
    """``A_k = 2/(b-a) Re{phi(w_k) exp(-i k a pi/(b-a))}``."""
    phi = np.asarray(phi)
    k = np.arange(phi.size)
    shift = np.exp(-1j * k * np.pi * support.a / support.width)
    return 2.0 / support.width * np.real(phi * shift)


@dataclass(frozen=True)
class CosExpansion:
    """Cosine series of one target law on ``support``."""

    support: CosSupport
    coeffs: np.ndarray
    filter: Optional[SpectralFilter] = None
    target: str = NETTING
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def K(self) -> int:
        return self.coeffs.size - 1

    def truncated(self, K: int) -> "CosExpansion":
        if K > self.K:
            raise ValueError(f"only {self.K} terms available")
        return CosExpansion(self.support, self.coeffs[:K + 1], self.filter, self.target, self.meta)

    def damping(self) -> np.ndarray:
        k = np.arange(1, self.K + 1)
        if self.filter is None:
            return np.ones(self.K)
        return self.filter(k / self.K)

    def _theta(self, e):
        a, b = self.support.a, self.support.b
        e = np.clip(np.asarray(e, dtype=float), a, b)
        return e, np.pi * (e - a) / (b - a)

    def series_cdf(self, e) -> np.ndarray:
        """Raw (unclamped) partial sum of the CDF series."""
        e, theta = self._theta(e)
        k = np.arange(1, self.K + 1)
        w = self.coeffs[1:] * self.damping() * self.support.width / (k * np.pi)
        return 0.5 * self.coeffs[0] * (e - self.support.a) + np.sin(np.multiply.outer(theta, k)) @ w

    def pdf(self, e) -> np.ndarray:
        e, theta = self._theta(e)
        k = np.arange(1, self.K + 1)
        return 0.5 * self.coeffs[0] + np.cos(np.multiply.outer(theta, k)) @ (self.coeffs[1:] * self.damping())

    def cdf(self, e) -> np.ndarray:
        return _clamp(self.series_cdf(e), 0.0, 1.0, "CDF")


def _clamp(x, lo, hi, what):
    x = np.asarray(x, dtype=float)
    excess = max(float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
    if excess > CLAMP_REPORT:
        log.warning("%s excursion of %.3g clamped", what, excess)
    return np.clip(x, lo, hi)


def build_expansion(values: np.ndarray, grid: TensorGrid, support: CosSupport, K: int,
                    filter: Optional[SpectralFilter] = None, target: str = NETTING) -> CosExpansion:
    phi = characteristic_function(values, grid, frequencies(support, K))
    return CosExpansion(support, cos_coefficients(phi, support), filter, target)


def cdf_netting(expansion: CosExpansion, e):
    """Netting-set exposure CDF from an expansion of the unfloored MtM."""
    e = np.asarray(e, dtype=float)
    return np.where(e <= 0.0, 0.0, expansion.cdf(e))


def cdf_counterparty(expansion: CosExpansion, e):
    """Counterparty exposure CDF from a (filtered) expansion on ``[0, b]``."""
    e = np.asarray(e, dtype=float)
    return np.where(e < 0.0, 0.0, expansion.cdf(e))


def safeguarded_newton(f, fprime, lo: float, hi: float, xtol: float, maxiter: int = 200):
    """Root of ``f`` in ``[lo, hi]`` with ``f(lo) < 0 <= f(hi)``.

    Newton steps that leave the bracket or fail to halve it fall back to
    bisection.
    """
    x = 0.5 * (lo + hi)
    dx_old = hi - lo
    dx = dx_old
    fx, dfx = f(x), fprime(x)
    for _ in range(maxiter):
        if fx < 0:
            lo = x
        else:
            hi = x
        newton_ok = dfx > 0 and lo < x - fx / dfx < hi and abs(2.0 * fx) < abs(dx_old * dfx)
        dx_old = dx
        if newton_ok:
            dx = fx / dfx
            x = x - dx
        else:
            dx = 0.5 * (hi - lo)
            x = lo + dx
        fx, dfx = f(x), fprime(x)
        if abs(dx) < xtol or fx == 0.0:
            # one more Newton step once converged; stays inside the bracket
            if dfx > 0 and lo <= x - fx / dfx <= hi:
                x = x - fx / dfx
            return x
    return x


@dataclass
class PfeResult:
    value: float
    status: str = "ok"  # ok | atom | no_sign_change


def pfe_search(expansion: CosExpansion, alpha: float = 0.975, scan: Optional[int] = None) -> PfeResult:
    """Smallest ``e`` with ``F(e) = alpha`` on ``[max(a, 0), b]``.

    The CDF is scanned on a grid to bracket the first crossing (filtered
    series can oscillate), then refined with safeguarded Newton using the
    recovered density as derivative.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    lo, hi = max(expansion.support.a, 0.0), expansion.support.b
    if hi <= 0:
        return PfeResult(0.0, "atom")
    F = lambda e: float(expansion.series_cdf(e)) - alpha  # noqa: E731
    if F(lo) >= 0:
        return PfeResult(0.0, "atom")
    n = scan or max(256, 4 * expansion.K)
    grid = np.linspace(lo, hi, n + 1)
    vals = expansion.series_cdf(grid) - alpha
    hit = np.flatnonzero(vals >= 0)
    if hit.size == 0:
        log.warning("CDF never reaches alpha=%g on [%g, %g]", alpha, lo, hi)
        return PfeResult(hi, "no_sign_change")
    i = hit[0]
    if i == 0:
        return PfeResult(0.0, "atom")
    root = safeguarded_newton(F, lambda e: float(expansion.pdf(e)), grid[i - 1], grid[i],
                              xtol=1e-10 * expansion.support.width)
    return PfeResult(float(root))


def pfe(expansion: CosExpansion, alpha: float = 0.975) -> float:
    return pfe_search(expansion, alpha).value


def ee(expansion: CosExpansion) -> float:
    """Expected positive part ``E[max(Y, 0)]`` from the cosine density.

    Integrates ``v * f(v)`` term by term over ``[max(a,0), max(b,0)]``.
    """
    a, b = expansion.support.a, expansion.support.b
    lo, hi = max(a, 0.0), max(b, 0.0)
    if hi <= lo:
        return 0.0
    width = b - a
    k = np.arange(1, expansion.K + 1)
    c = k * np.pi / width
    th_hi, th_lo = c * (hi - a), c * (lo - a)
    bracket = (hi * np.sin(th_hi) - lo * np.sin(th_lo)) / c + (np.cos(th_hi) - np.cos(th_lo)) / c**2
    value = 0.25 * expansion.coeffs[0] * (hi**2 - lo**2) + np.sum(expansion.coeffs[1:] * expansion.damping() * bracket)
    if value < 0:
        if value < -CLAMP_REPORT * max(1.0, abs(hi)):
            log.warning("negative EE %.3g clamped to zero", value)
        value = 0.0
    return float(value)
