"""Linear IR/FX trades as single-currency cash-flow legs.

Every trade decomposes into legs, each in one currency, whose time-``t``
value is a linear combination of zero-coupon bonds.  Floating legs use the
single-curve identity: before the first reset they are worth a notional
exchange ``+N at T0, -N at Tn``; once accruing, the current coupon is
fixed at the initial-curve forward and paid with the notional at the next
payment date.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import DOMESTIC, FOREIGN, ModelParams, bond_coefficients

FREQUENCIES = {"annual": 1, "semiannual": 2, "quarterly": 4}
KINDS = ("FRA", "IRS", "FXForward", "CCS")

_SCHEDULE_EPS = 1e-9


class ScheduleError(ValueError):
    """Raised for trade terms that do not define a valid schedule."""


class PricingCounter:
    """Counts leg valuations: one call = one leg priced at one state."""

    def __init__(self):
        self.calls = 0

    def add(self, n_legs: int, n_points: int) -> None:
        self.calls += int(n_legs) * int(n_points)

    def reset(self) -> None:
        self.calls = 0


@dataclass(frozen=True)
class Leg:
    """Deterministic cash flows in one currency, plus an optional float part.

    ``times``/``amounts`` are fixed flows.  A float part receives
    ``float_notional`` floating coupons over ``float_dates`` (its sign
    decides pay/receive).
    """

    currency: str
    times: tuple = ()
    amounts: tuple = ()
    float_notional: float = 0.0
    float_dates: tuple = ()

    def __post_init__(self):
        if self.currency not in (DOMESTIC, FOREIGN):
            raise ScheduleError(f"unknown leg currency {self.currency!r}")
        if len(self.times) != len(self.amounts):
            raise ScheduleError("times and amounts differ in length")
        if np.any(np.diff(self.times) <= 0) or np.any(np.asarray(self.times) < 0):
            raise ScheduleError("payment times must be non-negative and strictly increasing")
        if not np.all(np.isfinite(self.amounts)):
            raise ScheduleError("amounts must be finite")
        if self.float_dates and np.any(np.diff(self.float_dates) <= 0):
            raise ScheduleError("float schedule must be strictly increasing")

    @property
    def last_payment(self) -> float:
        ends = list(self.times[-1:]) + list(self.float_dates[-1:])
        return max(ends) if ends else 0.0

    def flows_at(self, t: float, curve=None):
        """Cash flows still to be paid at valuation date ``t``.

        Flows paid strictly before ``t`` are dropped.  ``curve`` (the leg
        currency's initial discount curve) is needed once a floating
        coupon is accruing.
        """
        times = [T for T in self.times if T >= t]
        amounts = [A for T, A in zip(self.times, self.amounts) if T >= t]
        if self.float_dates and self.float_notional != 0.0:
            dates = self.float_dates
            N = self.float_notional
            if t <= dates[0]:
                extra = [(dates[0], N), (dates[-1], -N)]
            elif t <= dates[-1]:
                j = bisect.bisect_left(dates, t)
                growth = float(curve.discount(dates[j - 1]) / curve.discount(dates[j]))
                extra = [(dates[j], N * growth), (dates[-1], -N)]
            else:
                extra = []
            for T, A in extra:
                times.append(T)
                amounts.append(A)
        if not times:
            return np.empty(0), np.empty(0)
        times = np.asarray(times, dtype=float)
        amounts = np.asarray(amounts, dtype=float)
        order = np.argsort(times, kind="stable")
        return times[order], amounts[order]


@dataclass(frozen=True)
class Trade:
    trade_id: str
    kind: str
    legs: tuple
    netting_set: str
    notional: float
    terms: dict = field(default_factory=dict, compare=True, hash=False)

    @property
    def maturity(self) -> float:
        return max(leg.last_payment for leg in self.legs)

    @property
    def currencies(self) -> list:
        return sorted({leg.currency for leg in self.legs})

    def with_netting_set(self, netting_set: str) -> "Trade":
        terms = dict(self.terms)
        terms["netting_set"] = netting_set
        return Trade(self.trade_id, self.kind, self.legs, netting_set, self.notional, terms)

    def to_dict(self) -> dict:
        return dict(self.terms)


def schedule(start: float, maturity: float, frequency: str) -> list:
    """Payment dates generated backwards from ``maturity`` (front stub)."""
    if frequency not in FREQUENCIES:
        raise ScheduleError(f"frequency must be one of {sorted(FREQUENCIES)}")
    if not maturity > start >= 0:
        raise ScheduleError("need maturity > start >= 0")
    step = 1.0 / FREQUENCIES[frequency]
    dates = []
    k = 0
    while True:
        d = maturity - k * step
        if d <= start + _SCHEDULE_EPS:
            break
        dates.append(d)
        k += 1
    dates.reverse()
    return [start] + dates


def _fixed_flows(dates, notional, rate):
    taus = np.diff(dates)
    return list(dates[1:]), list(notional * rate * taus)


def build_trade(kind: str, terms: dict, conventions: Optional[dict] = None) -> Trade:
    """Decompose a trade description into cash-flow legs.

    ``terms`` uses the portfolio-file keys: ``id, kind, currencies,
    notional, fixed_rate, start, maturity, frequency, netting_set`` and,
    depending on the kind, ``payer``, ``leg_notional``, ``fx_rate`` and
    ``fixed_rate_foreign``.  ``leg_notional`` is in the trade currency
    (foreign notional for FX trades); ``notional`` is the domestic
    reporting notional.  ``conventions`` may override ``frequency``.
    """
    if kind not in KINDS:
        raise ScheduleError(f"unknown trade kind {kind!r}")
    conventions = conventions or {}
    t = dict(terms)
    t["kind"] = kind
    t.setdefault("frequency", conventions.get("frequency", "annual"))
    t.setdefault("payer", True)
    t.setdefault("netting_set", "NS1")
    t.setdefault("id", f"{kind}-0")
    sign = 1.0 if t["payer"] else -1.0
    start, maturity = float(t["start"]), float(t["maturity"])
    if not maturity > start >= 0:
        raise ScheduleError(f"trade {t['id']}: need maturity > start >= 0")
    N = float(t.get("leg_notional", t["notional"]))
    K = float(t.get("fixed_rate", 0.0))

    if kind in ("FRA", "IRS"):
        ccys = t.setdefault("currencies", [DOMESTIC])
        if len(ccys) != 1:
            raise ScheduleError(f"{kind} is a single-currency trade")
        ccy = ccys[0]
        if kind == "FRA":
            tau = maturity - start
            legs = (Leg(ccy, (maturity,), (-sign * N * K * tau,),
                        float_notional=sign * N, float_dates=(start, maturity)),)
        else:
            dates = schedule(start, maturity, t["frequency"])
            times, amounts = _fixed_flows(dates, N, K)
            legs = (
                Leg(ccy, float_notional=sign * N, float_dates=tuple(dates)),
                Leg(ccy, tuple(times), tuple(-sign * a for a in amounts)),
            )
    elif kind == "FXForward":
        t.setdefault("currencies", [DOMESTIC, FOREIGN])
        fx = float(t["fx_rate"])
        legs = (
            Leg(FOREIGN, (maturity,), (sign * N,)),
            Leg(DOMESTIC, (maturity,), (-sign * N * fx,)),
        )
    else:  # CCS: pay domestic fixed, receive foreign fixed (payer side)
        t.setdefault("currencies", [DOMESTIC, FOREIGN])
        fx = float(t["fx_rate"])
        Kf = float(t.get("fixed_rate_foreign", 0.0))
        dates = schedule(start, maturity, t["frequency"])
        Nd = N * fx
        d_times, d_coupons = _fixed_flows(dates, Nd, K)
        f_times, f_coupons = _fixed_flows(dates, N, Kf)
        d_amounts = [-c for c in d_coupons]
        d_amounts[-1] -= Nd
        f_amounts = list(f_coupons)
        f_amounts[-1] += N
        legs = (
            Leg(DOMESTIC, (start, *d_times), tuple(sign * a for a in [Nd] + d_amounts)),
            Leg(FOREIGN, (start, *f_times), tuple(sign * a for a in [-N] + f_amounts)),
        )
    return Trade(str(t["id"]), kind, legs, str(t["netting_set"]), float(t["notional"]), t)


def trade_from_dict(d: dict) -> Trade:
    if "kind" not in d:
        raise ScheduleError("trade record lacks 'kind'")
    return build_trade(d["kind"], d)


def _leg_values(params: ModelParams, leg: Leg, t: float, x):
    _, _, curve, _ = params.factor(leg.currency)
    times, amounts = leg.flows_at(t, curve)
    x = np.asarray(x, dtype=float)
    if times.size == 0:
        return np.zeros_like(x)
    A, B = bond_coefficients(params, leg.currency, t, times)
    return np.exp(-np.multiply.outer(x, B)) @ (amounts * A)


def value_trade(trade: Trade, params: ModelParams, t: float, state) -> np.ndarray:
    """Domestic MtM of ``trade`` at states ``[..., (x_d, x_f, log X)]``."""
    state = np.asarray(state, dtype=float)
    x_d, x_f, logX = state[..., 0], state[..., 1], state[..., 2]
    value = np.zeros(state.shape[:-1])
    for leg in trade.legs:
        if leg.currency == DOMESTIC:
            value = value + _leg_values(params, leg, t, x_d)
        else:
            value = value + np.exp(logX) * _leg_values(params, leg, t, x_f)
    return value


@dataclass
class FlowTable:
    """All live flows of one currency with their netting-set loadings.

    ``coef[f, s]`` is ``amount_f * A(t, T_f)`` when flow ``f`` belongs to
    netting set ``s`` and zero otherwise, so that leg values summed per
    netting set are ``exp(-outer(x, B)) @ coef``.
    """

    currency: str
    B: np.ndarray
    coef: np.ndarray
    n_legs: int

    def values(self, x, counter: Optional[PricingCounter] = None, max_block: int = 2_000_000):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        if counter is not None:
            counter.add(self.n_legs, flat.size)
        n_sets = self.coef.shape[1]
        out = np.zeros((flat.size, n_sets))
        if self.B.size:
            step = max(1, max_block // self.B.size)
            for s in range(0, flat.size, step):
                blk = flat[s:s + step]
                out[s:s + step] = np.exp(-np.multiply.outer(blk, self.B)) @ self.coef
        return out.reshape(x.shape + (n_sets,))

    def values_affine(self, c0: float, u, v, counter: Optional[PricingCounter] = None):
        """Values on the plane ``x[i, j] = c0 + u[i] + v[j]``, shape ``(len(u), len(v), n_sets)``.

        ``exp(-B x)`` factors into ``exp(-B c0) exp(-B u_i) exp(-B v_j)``, so the
        plane costs two 1-d exponential tables and one matrix product per set.
        """
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        if counter is not None:
            counter.add(self.n_legs, u.size * v.size)
        n_sets = self.coef.shape[1]
        if not self.B.size:
            return np.zeros((u.size, v.size, n_sets))
        scaled = self.coef * np.exp(-self.B * c0)[:, None]
        Eu = np.exp(-np.multiply.outer(u, self.B))
        Ev = np.exp(-np.multiply.outer(v, self.B))
        return np.stack([(Eu * scaled[:, s]) @ Ev.T for s in range(n_sets)], axis=-1)


@dataclass(frozen=True)
class CompiledSchedule:
    """Every leg of one currency flattened into arrays, built once per portfolio.

    Fixed flows are ``fixed_T``/``fixed_A`` with netting-set index
    ``fixed_set``.  Float parts keep their roll dates concatenated in
    ``float_dates`` with leg ``k`` owning ``float_dates[offset[k]:offset[k+1]]``.
    """

    n_legs: int
    fixed_T: np.ndarray
    fixed_A: np.ndarray
    fixed_set: np.ndarray
    float_N: np.ndarray
    float_set: np.ndarray
    float_dates: np.ndarray
    offset: np.ndarray

    def flows_at(self, t: float, curve):
        """Live flows at ``t`` as ``(times, amounts, set_index)``, same rules as :meth:`Leg.flows_at`."""
        live = self.fixed_T >= t
        T, A, S = [self.fixed_T[live]], [self.fixed_A[live]], [self.fixed_set[live]]
        if self.float_N.size:
            first, last = self.offset[:-1], self.offset[1:] - 1
            d0, dN = self.float_dates[first], self.float_dates[last]
            pending = t <= d0
            accruing = (t > d0) & (t <= dN)
            alive = pending | accruing
            # index of the first roll date >= t, per leg
            before = np.add.reduceat((self.float_dates < t).astype(int), first)
            j = first + before
            j_acc = j[accruing]
            growth = np.asarray(curve.discount(self.float_dates[j_acc - 1]), dtype=float) / np.asarray(
                curve.discount(self.float_dates[j_acc]), dtype=float)
            coupon_T = np.where(pending, d0, self.float_dates[np.minimum(j, last)])
            coupon_A = self.float_N.copy()
            coupon_A[accruing] *= growth
            T += [coupon_T[alive], dN[alive]]
            A += [coupon_A[alive], -self.float_N[alive]]
            S += [self.float_set[alive], self.float_set[alive]]
        return np.concatenate(T), np.concatenate(A), np.concatenate(S).astype(int)


def compile_schedule(portfolio, currency: str) -> CompiledSchedule:
    index = {s: i for i, s in enumerate(portfolio.netting_set_ids)}
    fixed_T, fixed_A, fixed_set = [], [], []
    float_N, float_set, float_dates, offset = [], [], [], [0]
    n_legs = 0
    for trade in portfolio.trades:
        k = index[trade.netting_set]
        for leg in trade.legs:
            if leg.currency != currency:
                continue
            n_legs += 1
            fixed_T.extend(leg.times)
            fixed_A.extend(leg.amounts)
            fixed_set.extend([k] * len(leg.times))
            if leg.float_dates and leg.float_notional != 0.0:
                float_N.append(leg.float_notional)
                float_set.append(k)
                float_dates.extend(leg.float_dates)
                offset.append(len(float_dates))
    arr = lambda v, dt=float: np.asarray(v, dtype=dt)  # noqa: E731
    return CompiledSchedule(n_legs, arr(fixed_T), arr(fixed_A), arr(fixed_set, int), arr(float_N),
                            arr(float_set, int), arr(float_dates), arr(offset, int))


def _schedule(portfolio, currency: str) -> CompiledSchedule:
    cache = getattr(portfolio, "compiled_schedules", None)
    return cache[currency] if cache is not None else compile_schedule(portfolio, currency)


def flow_table(portfolio, params: ModelParams, t: float, currency: str) -> FlowTable:
    _, _, curve, _ = params.factor(currency)
    sched = _schedule(portfolio, currency)
    times, amounts, sets = sched.flows_at(t, curve)
    coef = np.zeros((times.size, len(portfolio.netting_set_ids)))
    if times.size:
        Acoef, B = bond_coefficients(params, currency, t, times)
        coef[np.arange(times.size), sets] = amounts * Acoef
    else:
        B = np.empty(0)
    return FlowTable(currency, B, coef, sched.n_legs)


def state_axes(dist, nodes):
    """Factor values on the tensor grid, exploiting the triangular factor.

    Returns ``x_d`` of shape ``(J,)``, ``x_f`` of shape ``(J, J)`` and
    ``log X`` of shape ``(J, J, J)``.
    """
    m, s, L = dist.mean, dist.scale, dist.chol
    n = np.asarray(nodes, dtype=float)
    x_d = m[0] + s[0] * L[0, 0] * n
    x_f = m[1] + s[1] * (L[1, 0] * n[:, None] + L[1, 1] * n[None, :])
    logX = m[2] + s[2] * (L[2, 0] * n[:, None, None] + L[2, 1] * n[None, :, None]
                          + L[2, 2] * n[None, None, :])
    return x_d, x_f, logX


def portfolio_value_grid(portfolio, params: ModelParams, t: float, grid, dist,
                         counter: Optional[PricingCounter] = None) -> np.ndarray:
    """Netting-set MtM on the tensor grid, shape ``(n_sets, J, J, J)``.

    Domestic legs are priced on the 1-d ``x_d`` axis and foreign legs on the
    2-d ``x_f`` slice; the FX conversion is a broadcast over the full grid.
    Leg valuations therefore scale as ``N_d*J + N_f*J**2``.
    """
    if abs(dist.t - t) > 1e-12:
        raise ValueError("state distribution built for a different date")
    x_d, _, logX = state_axes(dist, grid.nodes)
    m, s, L, n = dist.mean, dist.scale, dist.chol, np.asarray(grid.nodes, dtype=float)
    dom = flow_table(portfolio, params, t, DOMESTIC).values(x_d, counter)  # (J, S)
    fgn = flow_table(portfolio, params, t, FOREIGN).values_affine(          # (J, J, S)
        m[1], s[1] * L[1, 0] * n, s[1] * L[1, 1] * n, counter)
    fx = np.exp(logX)
    V = (dom.T[:, :, None, None]
         + np.moveaxis(fgn, -1, 0)[:, :, :, None] * fx[None])
    return V


def naive_value_grid(portfolio, params: ModelParams, t: float, grid, dist) -> np.ndarray:
    """Reference valuation: every trade priced at every reconstructed state."""
    n = grid.nodes
    Z = np.stack(np.meshgrid(n, n, n, indexing="ij"), axis=-1)
    states = dist.states(Z)
    set_ids = portfolio.netting_set_ids
    V = np.zeros((len(set_ids),) + Z.shape[:-1])
    for trade in portfolio.trades:
        V[set_ids.index(trade.netting_set)] += value_trade(trade, params, t, states)
    return V
