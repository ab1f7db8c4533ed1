"""Monte Carlo exposure oracle with exact sampling of the time-t state.

Paths are drawn in batches.  Batch ``i`` uses its own Philox stream keyed
by ``SeedSequence(seed).spawn(n_batches)[i]``, so results depend only on
``(seed, n_sim, batch_size)`` and batches can be evaluated in any order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import binom

from .instruments import PricingCounter, flow_table, value_trade
from .model import DOMESTIC, FOREIGN, ModelParams, shifted_models, state_distribution


@dataclass(frozen=True)
class McConfig:
    n_sim: int = 500_000
    seed: int = 12345
    batch_size: int = 50_000

    def __post_init__(self):
        if self.n_sim < 1000:
            raise ValueError("n_sim must be >= 1000 for quantile estimation")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def streams(self):
        n_batches = math.ceil(self.n_sim / self.batch_size)
        children = np.random.SeedSequence(self.seed).spawn(n_batches)
        for i, child in enumerate(children):
            size = min(self.batch_size, self.n_sim - i * self.batch_size)
            yield size, np.random.Generator(np.random.Philox(child))


@dataclass
class McPaths:
    """Per-path netting-set MtM ``values[n, S]`` and derived exposures."""

    t: float
    netting_set_ids: list
    values: np.ndarray
    states: Optional[np.ndarray] = None

    @property
    def exposures(self) -> np.ndarray:
        return np.maximum(self.values, 0.0)

    @property
    def counterparty(self) -> np.ndarray:
        return self.exposures.sum(axis=1)


@dataclass
class McResult:
    pfe_hat: float
    ee_hat: float
    ee_se: float
    pfe_band: tuple
    cpu_seconds: float = 0.0


def sample_states(params: ModelParams, t: float, cfg: McConfig):
    """Exact draws of ``[x_d, x_f, log X]`` at ``t``, batch by batch."""
    dist = state_distribution(params, t)
    for size, rng in cfg.streams():
        yield dist.states(rng.standard_normal((size, 3)))


def simulate_exposures(portfolio, params: ModelParams, t: float, cfg: McConfig = McConfig(),
                       counter: Optional[PricingCounter] = None, keep_states: bool = False) -> McPaths:
    """Revalue every leg of the portfolio on exactly sampled states."""
    if t <= 0:
        raise ValueError("Monte Carlo needs t > 0; t = 0 is deterministic")
    dom = flow_table(portfolio, params, t, DOMESTIC)
    fgn = flow_table(portfolio, params, t, FOREIGN)
    chunks, states = [], []
    for X in sample_states(params, t, cfg):
        V = dom.values(X[:, 0], counter) + fgn.values(X[:, 1], counter) * np.exp(X[:, 2])[:, None]
        chunks.append(V)
        if keep_states:
            states.append(X)
    return McPaths(t, portfolio.netting_set_ids, np.concatenate(chunks),
                   np.concatenate(states) if keep_states else None)


def deterministic_values(portfolio, params: ModelParams, t: float) -> np.ndarray:
    """Netting-set MtM at the mean state (exact when the law is a point mass)."""
    dist = state_distribution(params, t)
    ids = portfolio.netting_set_ids
    V = np.zeros(len(ids))
    for trade in portfolio.trades:
        V[ids.index(trade.netting_set)] += float(value_trade(trade, params, t, dist.mean))
    return V


def estimate_metrics(paths, alpha: float = 0.975, confidence: float = 0.99) -> McResult:
    """Empirical PFE (order statistic), EE and their uncertainty."""
    x = np.sort(np.asarray(paths, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("no paths")
    r = max(1, math.ceil(alpha * n))
    pfe_hat = x[r - 1]
    tail = 0.5 * (1.0 - confidence)
    lo = int(binom.ppf(tail, n, alpha))
    hi = int(binom.ppf(1.0 - tail, n, alpha)) + 1
    band = (float(x[max(lo, 1) - 1]), float(x[min(hi, n) - 1]))
    if x[0] == x[-1]:  # a point mass; summation would only add round-off
        return McResult(float(x[0]), float(x[0]), 0.0, (float(x[0]), float(x[0])))
    ee_hat = float(x.mean())
    ee_se = float(x.std(ddof=1) / np.sqrt(n))
    return McResult(float(pfe_hat), ee_hat, ee_se, band)


def mc_ee_sensitivities(portfolio, params: ModelParams, t: float, cfg: McConfig = McConfig()):
    """Common-random-number finite-difference EE sensitivities.

    Returns ``(sens, se)`` each of shape ``(n_sets, 3)`` in the order
    ``d/dx_d0, d/dx_f0, d/dX0``.
    """
    base = simulate_exposures(portfolio, params, t, cfg).exposures
    sens = np.zeros((base.shape[1], 3))
    se = np.zeros_like(sens)
    for j, (shocked, h) in enumerate(shifted_models(params)):
        diff = (simulate_exposures(portfolio, shocked, t, cfg).exposures - base) / h
        sens[:, j] = diff.mean(axis=0)
        se[:, j] = diff.std(axis=0, ddof=1) / np.sqrt(diff.shape[0])
    return sens, se


def deterministic_ee_sensitivities(portfolio, params: ModelParams, t: float):
    """Finite-difference EE sensitivities of a point-mass state (``t = 0``)."""
    base = np.maximum(deterministic_values(portfolio, params, t), 0.0)
    sens = np.zeros((base.size, 3))
    for j, (shocked, h) in enumerate(shifted_models(params)):
        sens[:, j] = (np.maximum(deterministic_values(portfolio, shocked, t), 0.0) - base) / h
    return sens, np.zeros_like(sens)


def timed(fn, *args, **kwargs):
    start = time.process_time()
    out = fn(*args, **kwargs)
    return out, time.process_time() - start
