"""Convergence sweeps and COS-vs-MC comparison tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import cos
from .cos import COUNTERPARTY
from .report import Settings, cos_rows, mc_rows, run_dates, time_averaged_error

REFERENCE_K = 150
REFERENCE_J = 130

DEFAULT_SWEEPS = {
    ("K", "netting"): tuple(range(4, 129, 4)),
    ("K", "counterparty"): (16, 24, 32, 48, 64, 96, 128),
    ("J", "netting"): tuple(range(10, 61, 5)),
    ("J", "counterparty"): tuple(range(10, 61, 5)),
}


@dataclass
class SweepPoint:
    sweep: str
    value: int
    pfe: float
    pfe_ref: float
    rel_error: float


@dataclass
class SweepResult:
    sweep: str
    level: str
    t: float
    points: list
    slope: float
    slope_kind: str  # "semilog" (log10 error per unit) or "loglog"


def _expansion_pfes(est, alpha, K: Optional[int] = None):
    """PFEs of the fitted target(s), optionally truncated to ``K`` terms."""
    if est.level == COUNTERPARTY:
        exps = [est.counterparty_]
    else:
        exps = [f.expansion for f in est.netting_]
    if any(e is None for e in exps):
        raise ValueError("degenerate exposure law at this date; nothing to converge")
    if K is not None:
        exps = [e.truncated(K) for e in exps]
    return np.array([cos.pfe_search(e, alpha).value for e in exps])


def _fit_slope(xs, errs, kind):
    xs, errs = np.asarray(xs, dtype=float), np.asarray(errs, dtype=float)
    ok = errs > 0
    if ok.sum() < 2:
        return float("nan")
    x = np.log(xs[ok]) if kind == "loglog" else xs[ok]
    y = np.log(errs[ok]) if kind == "loglog" else np.log10(errs[ok])
    return float(np.polyfit(x, y, 1)[0])


def converge(portfolio, model, settings: Settings, sweep: str = "K", values: Optional[Sequence[int]] = None,
             t: Optional[float] = None, ref_K: int = REFERENCE_K, ref_J: int = REFERENCE_J) -> SweepResult:
    """Relative PFE error against the high-setting COS reference.

    ``sweep="K"`` varies the expansion terms at ``J = ref_J`` (one fit, then
    truncation, which is exact since coefficients do not depend on ``K``);
    ``sweep="J"`` varies the quadrature points at ``K = ref_K`` with the
    expansion interval pinned to the reference one.
    """
    if sweep not in ("K", "J"):
        raise ValueError("sweep must be 'K' or 'J'")
    level = settings.level
    values = tuple(values or DEFAULT_SWEEPS[(sweep, level)])
    t = portfolio.max_maturity / 2 if t is None else float(t)
    alpha = settings.alpha

    if sweep == "K":
        base = settings.replace(K=max(ref_K, max(values)), J=ref_J).cos_estimator()
        fit = base.fit(portfolio, model, t)
        ref = _expansion_pfes(fit, alpha, ref_K)
        pfes = [_expansion_pfes(fit, alpha, K) for K in values]
    else:
        fit = settings.replace(K=ref_K, J=ref_J).cos_estimator().fit(portfolio, model, t)
        ref = _expansion_pfes(fit, alpha)
        pfes = []
        for J in values:
            est = settings.replace(K=ref_K, J=J).cos_estimator()
            pfes.append(_expansion_pfes(est.fit(portfolio, model, t, supports=fit.supports_), alpha))

    points = []
    for v, p in zip(values, pfes):
        rel = np.abs(p - ref) / np.maximum(np.abs(ref), 1e-300)
        i = int(np.argmax(rel))
        points.append(SweepPoint(sweep, int(v), float(p[i]), float(ref[i]), float(rel[i])))
    kind = "loglog" if (sweep == "K" and level == COUNTERPARTY) else "semilog"
    slope = _fit_slope([p.value for p in points], [p.rel_error for p in points], kind)
    return SweepResult(sweep, level, t, points, slope, kind)


@dataclass
class CompareRow:
    portfolio: str
    n_trades: int
    method: str
    n_sim: int
    cpu_seconds: float
    pfe_error_pct: float
    ee_error_pct: float


def compare(portfolios, model, settings: Settings, n_sims: Sequence[int] = (500_000,),
            ref_K: int = REFERENCE_K, ref_J: int = REFERENCE_J, reference=None) -> list:
    """Timing and accuracy of COS and MC against a COS reference run.

    ``portfolios`` is a sequence of ``(name, Portfolio)``.  Errors are
    time-averaged absolute differences in percent of total notional.
    ``reference`` optionally maps a name to precomputed reference rows.
    """
    reference = reference or {}
    out = []
    for name, pf in portfolios:
        ref_rows = reference.get(name)
        if ref_rows is None:
            ref_rows = run_dates(cos_rows, pf, model, settings.replace(K=ref_K, J=ref_J))
        notional = pf.total_notional
        rows = run_dates(cos_rows, pf, model, settings)
        err = time_averaged_error(rows, ref_rows, notional)
        out.append(CompareRow(name, len(pf), "COS", 0, sum(r.cpu_seconds for r in rows),
                              err["pfe"], err["ee"]))
        for n in n_sims:
            rows = run_dates(mc_rows, pf, model, settings.replace(n_sim=int(n)))
            err = time_averaged_error(rows, ref_rows, notional)
            out.append(CompareRow(name, len(pf), "MC", int(n), sum(r.cpu_seconds for r in rows),
                                  err["pfe"], err["ee"]))
    return out
