"""Seeded random portfolios of linear IR/FX trades.

RNG: numpy ``Generator(Philox(seed))`` -- Philox-4x64 with 10 rounds, a
counter-based generator, keyed through numpy's ``SeedSequence``.  The same
seed gives a byte-identical portfolio file on every platform.

Default distributions (per trade, independent):

* kind uniform over FRA, IRS, FXForward, CCS
* currency of FRA/IRS uniform over domestic/foreign
* maturity uniform on [1, 15] years; FRA accrual uniform over 3m/6m/1y
* domestic-equivalent notional uniform on [500, 2600]
* payer/receiver with probability 1/2
* fixed rates at par plus a uniform jitter of +-100bp; FX strikes at the
  covered-interest-parity forward times ``1 + U(-2%, 2%)``
* IRS/CCS start today with annual, semiannual or quarterly payments
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .instruments import FREQUENCIES, KINDS, Trade, compile_schedule, schedule, trade_from_dict
from .model import DOMESTIC, FOREIGN, ModelParams, usd_jpy_params

PARTITION_MODES = ("single_netting_set", "by_contract_type")


@dataclass(frozen=True)
class GeneratorSpec:
    n_trades: int = 100
    seed: int = 42
    kinds: tuple = KINDS
    kind_weights: Optional[tuple] = None
    maturity_range: tuple = (1.0, 15.0)
    notional_range: tuple = (500.0, 2600.0)
    rate_jitter: float = 0.01
    fx_jitter: float = 0.02
    netting_set: str = "NS1"

    def __post_init__(self):
        if self.n_trades < 1:
            raise ValueError("n_trades must be >= 1")
        lo, hi = self.maturity_range
        if not 0 < lo < hi:
            raise ValueError("maturity range must satisfy 0 < lo < hi")
        lo, hi = self.notional_range
        if not 0 < lo <= hi:
            raise ValueError("notional range must satisfy 0 < lo <= hi")
        if not set(self.kinds) <= set(KINDS) or not self.kinds:
            raise ValueError(f"kinds must be a non-empty subset of {KINDS}")
        if self.kind_weights is not None and len(self.kind_weights) != len(self.kinds):
            raise ValueError("kind_weights must match kinds")


@dataclass(frozen=True)
class Portfolio:
    trades: tuple

    def __post_init__(self):
        ids = [t.trade_id for t in self.trades]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate trade ids")

    @property
    def netting_set_ids(self) -> list:
        return sorted({t.netting_set for t in self.trades})

    @property
    def netting_map(self) -> dict:
        out = {s: [] for s in self.netting_set_ids}
        for t in self.trades:
            out[t.netting_set].append(t.trade_id)
        return out

    @property
    def total_notional(self) -> float:
        return float(sum(abs(t.notional) for t in self.trades))

    @property
    def max_maturity(self) -> float:
        return max(t.maturity for t in self.trades)

    @cached_property
    def compiled_schedules(self) -> dict:
        """Flattened per-currency cash-flow schedules, built on first use."""
        return {c: compile_schedule(self, c) for c in (DOMESTIC, FOREIGN)}

    def leg_counts(self) -> tuple:
        """``(N_d, N_f)``: numbers of domestic and foreign cash-flow legs."""
        n_d = sum(leg.currency == DOMESTIC for t in self.trades for leg in t.legs)
        n_f = sum(leg.currency == FOREIGN for t in self.trades for leg in t.legs)
        return n_d, n_f

    def subset(self, netting_set: str) -> "Portfolio":
        return Portfolio(tuple(t for t in self.trades if t.netting_set == netting_set))

    def merge(self, other: "Portfolio") -> "Portfolio":
        return Portfolio(self.trades + other.trades)

    def __len__(self):
        return len(self.trades)

    def to_json(self) -> str:
        return json.dumps([t.to_dict() for t in self.trades], indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_records(cls, records) -> "Portfolio":
        if not isinstance(records, list):
            raise ValueError("portfolio file must hold a JSON array of trades")
        trades = []
        for i, rec in enumerate(records):
            try:
                trades.append(trade_from_dict(rec))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"trade record {i}: {exc}") from exc
        return cls(tuple(trades))


def save_portfolio(portfolio: Portfolio, path) -> None:
    Path(path).write_text(portfolio.to_json())


def load_portfolio(path) -> Portfolio:
    with open(path) as fh:
        return Portfolio.from_records(json.load(fh))


def _par_rate(curve, dates) -> float:
    d = np.asarray(dates)
    dfs = curve.discount(d)
    annuity = np.sum(np.diff(d) * dfs[1:])
    return float((dfs[0] - dfs[-1]) / annuity)


def generate(spec: GeneratorSpec = GeneratorSpec(), params: Optional[ModelParams] = None) -> Portfolio:
    """Draw a random portfolio; a deterministic function of ``spec``."""
    params = params or usd_jpy_params()
    rng = np.random.Generator(np.random.Philox(spec.seed))
    weights = None
    if spec.kind_weights is not None:
        weights = np.asarray(spec.kind_weights, dtype=float)
        weights = weights / weights.sum()
    freqs = sorted(FREQUENCIES, key=FREQUENCIES.get)
    trades = []
    for i in range(spec.n_trades):
        kind = str(rng.choice(spec.kinds, p=weights))
        maturity = float(rng.uniform(*spec.maturity_range))
        notional = float(rng.uniform(*spec.notional_range))
        payer = bool(rng.integers(2))
        jitter = float(rng.uniform(-1.0, 1.0))
        rec = {"id": f"T{i:05d}", "kind": kind, "notional": notional, "maturity": maturity,
               "payer": payer, "netting_set": spec.netting_set}
        if kind in ("FRA", "IRS"):
            ccy = DOMESTIC if rng.integers(2) == 0 else FOREIGN
            curve = params.curve_d if ccy == DOMESTIC else params.curve_f
            rec["currencies"] = [ccy]
            rec["leg_notional"] = notional if ccy == DOMESTIC else notional / params.X0
            if kind == "FRA":
                tenor = float(rng.choice([0.25, 0.5, 1.0]))
                rec["start"] = maturity - tenor
                rec["frequency"] = "annual"
                dates = [rec["start"], maturity]
            else:
                rec["start"] = 0.0
                rec["frequency"] = freqs[int(rng.integers(len(freqs)))]
                dates = schedule(0.0, maturity, rec["frequency"])
            rec["fixed_rate"] = _par_rate(curve, dates) + spec.rate_jitter * jitter
        elif kind == "FXForward":
            rec["currencies"] = [DOMESTIC, FOREIGN]
            rec["start"] = 0.0
            rec["frequency"] = "annual"
            rec["leg_notional"] = notional / params.X0
            fwd = params.X0 * float(params.curve_f.discount(maturity) / params.curve_d.discount(maturity))
            rec["fx_rate"] = fwd * (1.0 + spec.fx_jitter * jitter)
            rec["fixed_rate"] = 0.0
        else:
            rec["currencies"] = [DOMESTIC, FOREIGN]
            rec["start"] = 0.0
            rec["frequency"] = freqs[int(rng.integers(len(freqs)))]
            rec["leg_notional"] = notional / params.X0
            rec["fx_rate"] = params.X0
            dates = schedule(0.0, maturity, rec["frequency"])
            jitter_f = float(rng.uniform(-1.0, 1.0))
            rec["fixed_rate"] = _par_rate(params.curve_d, dates) + spec.rate_jitter * jitter
            rec["fixed_rate_foreign"] = _par_rate(params.curve_f, dates) + spec.rate_jitter * jitter_f
        trades.append(trade_from_dict(rec))
    return Portfolio(tuple(trades))


def partition_counterparty(portfolio: Portfolio, mode: str = "by_contract_type") -> Portfolio:
    """Reassign netting sets; only non-empty sets appear."""
    if mode == "single_netting_set":
        return Portfolio(tuple(t.with_netting_set("NS1") for t in portfolio.trades))
    if mode == "by_contract_type":
        return Portfolio(tuple(t.with_netting_set(t.kind) for t in portfolio.trades))
    raise ValueError(f"partition mode must be one of {PARTITION_MODES}")
