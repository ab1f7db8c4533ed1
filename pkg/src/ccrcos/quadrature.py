"""Clenshaw-Curtis tensor quadrature against the standard normal density."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtri

DEFAULT_TOL = 1e-12

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def cc_nodes_weights(J: int):
    """Clenshaw-Curtis rule with ``J`` points on ``[-1, 1]``.

    Nodes are the Chebyshev extrema in ascending order.  Weights use the
    explicit cosine-sum formula, which is O(J^2) but J stays small here.
    """
    J = int(J)
    if J < 2:
        raise ValueError("Clenshaw-Curtis needs at least 2 points")
    n = J - 1
    theta = np.pi * np.arange(J) / n
    nodes = -np.cos(theta)
    w = np.empty(J)
    v = np.ones(J - 2)
    inner = theta[1:-1]
    if n % 2 == 0:
        w[0] = w[-1] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
        v -= np.cos(n * inner) / (n * n - 1)
    else:
        w[0] = w[-1] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / n
    if n % 2 == 0:
        nodes[n // 2] = 0.0
    return nodes, w


def normal_quantile(p):
    """Inverse of the standard normal CDF."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)) or np.any(np.isnan(p_arr)):
        raise ValueError("probability must lie strictly inside (0, 1)")
    out = ndtri(p_arr)
    return float(out) if out.ndim == 0 else out


def normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


@dataclass(frozen=True)
class QuadratureConfig:
    J: int = 40
    TOL: float = DEFAULT_TOL

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 3:
            raise ValueError("J must be an integer >= 3")
        if not 0 < self.TOL < 0.5:
            raise ValueError("TOL must lie in (0, 0.5)")


@dataclass(frozen=True, eq=False)
class TensorGrid:
    """Per-dimension nodes on ``[q_lo, q_hi]`` and effective weights.

    ``eff_weights`` already contain the standard normal density, so
    integrating ``f`` against the 3-d Gaussian reduces to
    ``sum_ijk w_i w_j w_k f(n_i, n_j, n_k)``.
    """

    J: int
    TOL: float
    nodes: np.ndarray
    weights: np.ndarray
    eff_weights: np.ndarray
    q_lo: float
    q_hi: float

    @property
    def shape(self):
        return (self.J, self.J, self.J)

    @property
    def mass(self) -> float:
        return float(self.eff_weights.sum() ** 3)

    def weight_tensor(self) -> np.ndarray:
        w = self.eff_weights
        return w[:, None, None] * w[None, :, None] * w[None, None, :]


@lru_cache(maxsize=32)
def _build_grid(J: int, TOL: float) -> TensorGrid:
    q_lo = normal_quantile(TOL)
    q_hi = -q_lo  # ndtri(1 - TOL) would lose digits to the rounding of 1 - TOL
    x, w = cc_nodes_weights(J)
    half = 0.5 * (q_hi - q_lo)
    nodes = 0.5 * (q_hi + q_lo) + half * x
    weights = half * w
    eff = weights * normal_pdf(nodes)
    for arr in (nodes, weights, eff):
        arr.setflags(write=False)
    return TensorGrid(J, TOL, nodes, weights, eff, q_lo, q_hi)


def tensor_grid(J: int = 40, TOL: float = DEFAULT_TOL) -> TensorGrid:
    cfg = QuadratureConfig(J, TOL)
    return _build_grid(int(cfg.J), float(cfg.TOL))


def tensor_integrate(grid: TensorGrid, values: np.ndarray):
    """Integrate grid values against the 3-d standard normal density.

    ``values`` has shape ``(..., J, J, J)``; leading axes are batch axes.
    """
    values = np.asarray(values)
    if values.shape[-3:] != grid.shape:
        raise ValueError(f"values shape {values.shape} does not end with {grid.shape}")
    w = grid.eff_weights
    out = np.tensordot(values, w, axes=([-1], [0]))
    out = np.tensordot(out, w, axes=([-1], [0]))
    out = np.tensordot(out, w, axes=([-1], [0]))
    return out[()] if out.ndim == 0 else out
