"""Multi-date exposure runs, results CSVs and run manifests.

A run evaluates one method (COS or MC) on ``dates`` equidistant exposure
dates in ``[0, T_max]`` and produces one :class:`RiskRow` per date (and per
netting set at netting level).  Dates are independent and are evaluated on
a thread pool; rows are assembled in date order whatever the pool size.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cos import COUNTERPARTY, NETTING
from .estimators import CosExposure, MonteCarloExposure
from .portfolio import PARTITION_MODES, partition_counterparty
from .validation import exposure_dates

SCHEMA_VERSION = 1
COLUMNS = ("t", "level", "pfe", "ee", "dEE_dxd", "dEE_dxf", "dEE_dX", "cpu_seconds", "method", "netting_set")
THREADS_ENV = "CCR_COS_THREADS"


@dataclass(frozen=True)
class Settings:
    """Engine and run settings shared by every subcommand.

    The first block mirrors the settings file keys of the COS engine; the
    second holds run-level choices.
    """

    K: int = 32
    J: int = 40
    J_mom: int = 20
    TOL: float = 1e-12
    L: float = 8.0
    alpha: float = 0.975
    filter_p: int = 2
    dates: int = 20

    level: str = NETTING
    partition: Optional[str] = None
    n_sim: int = 500_000
    seed: int = 12345
    batch_size: int = 50_000
    threads: int = 0  # 0: resolve from the environment

    def __post_init__(self):
        if self.level not in (NETTING, COUNTERPARTY):
            raise ValueError(f"level must be 'netting' or 'counterparty', got {self.level!r}")
        if self.partition is not None and self.partition not in PARTITION_MODES:
            raise ValueError(f"partition must be one of {PARTITION_MODES}")
        # the estimators validate the numeric fields on use; catch obvious slips early
        for name in ("K", "J", "J_mom", "dates", "n_sim", "batch_size"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict) -> "Settings":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown settings keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "Settings":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "Settings":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get(THREADS_ENV)
        if env:
            return max(1, int(env))
        return os.cpu_count() or 1

    def cos_estimator(self, level: Optional[str] = None) -> CosExposure:
        return CosExposure(n_terms=self.K, n_quad=self.J, n_quad_moments=self.J_mom, tol=self.TOL,
                           width=self.L, alpha=self.alpha, level=level or self.level,
                           filter_order=self.filter_p)

    def mc_estimator(self) -> MonteCarloExposure:
        return MonteCarloExposure(n_sim=self.n_sim, seed=self.seed, batch_size=self.batch_size,
                                  alpha=self.alpha, level=self.level)


@dataclass
class RiskRow:
    t: float
    level: str
    pfe: float = math.nan
    ee: float = math.nan
    dEE_dxd: float = math.nan
    dEE_dxf: float = math.nan
    dEE_dX: float = math.nan
    cpu_seconds: float = 0.0
    method: str = "COS"
    netting_set: str = ""

    def key(self):
        return (round(self.t, 10), self.level, self.netting_set)


@dataclass
class RunManifest:
    command: str
    settings: dict
    seeds: dict
    file_hashes: dict
    wall_seconds: float = 0.0
    cpu_seconds: float = 0.0
    versions: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True) + "\n"


def software_versions() -> dict:
    import numpy
    import scipy
    import sklearn

    return {"ccrcos": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def prepare_portfolio(portfolio, settings: Settings):
    if settings.partition is not None:
        return partition_counterparty(portfolio, settings.partition)
    return portfolio


def _rows_from_fit(est, t, level, method, cpu, sens=None) -> list:
    sens_rows = None if sens is None else np.asarray(sens)
    if level == COUNTERPARTY:
        row = RiskRow(t, level, float(est.pfe_), float(est.ee_), cpu_seconds=cpu, method=method)
        if sens_rows is not None:
            row.dEE_dxd, row.dEE_dxf, row.dEE_dX = (float(v) for v in sens_rows.sum(axis=0))
        return [row]
    pfe = np.atleast_1d(est.pfe_)
    ee = np.atleast_1d(est.ee_)
    rows = []
    for i, s in enumerate(est.netting_set_ids_):
        row = RiskRow(t, level, float(pfe[i]), float(ee[i]), cpu_seconds=cpu / len(pfe), method=method,
                      netting_set=s)
        if sens_rows is not None:
            row.dEE_dxd, row.dEE_dxf, row.dEE_dX = (float(v) for v in sens_rows[i])
        rows.append(row)
    return rows


def cos_rows(portfolio, model, t: float, settings: Settings, sensitivities: bool = False) -> list:
    start = time.thread_time()
    est = settings.cos_estimator().fit(portfolio, model, t)
    sens = est.sensitivities() if sensitivities else None
    return _rows_from_fit(est, t, settings.level, "COS", time.thread_time() - start, sens)


def mc_rows(portfolio, model, t: float, settings: Settings, sensitivities: bool = False) -> list:
    start = time.thread_time()
    est = settings.mc_estimator().fit(portfolio, model, t)
    sens = est.sensitivities()[0] if sensitivities else None
    return _rows_from_fit(est, t, settings.level, "MC", time.thread_time() - start, sens)


def run_dates(fn, portfolio, model, settings: Settings, dates=None, **kwargs) -> list:
    """Evaluate ``fn`` on every exposure date; rows come back in date order."""
    if dates is None:
        dates = exposure_dates(portfolio.max_maturity, settings.dates)
    threads = min(settings.resolved_threads(), len(dates))
    call = lambda t: fn(portfolio, model, float(t), settings, **kwargs)  # noqa: E731
    if threads <= 1:
        chunks = [call(t) for t in dates]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(call, dates))
    return [row for chunk in chunks for row in chunk]


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def manifest_path(results_path) -> Path:
    p = Path(results_path)
    return p.with_name(p.name + ".manifest.json")


def write_results(rows, path, manifest: Optional[RunManifest] = None) -> None:
    """Write a results CSV and, if given, its manifest next to it.

    ``path`` may also be an open text stream (no manifest is written then).
    """
    if hasattr(path, "write"):
        _write_rows(rows, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(rows, fh)
    if manifest is not None:
        manifest_path(path).write_text(manifest.to_json())


def _write_rows(rows, fh):
    w = csv.writer(fh)
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])


def read_results(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(COLUMNS[:-1]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = []
        for line, rec in enumerate(reader, start=2):
            try:
                num = {c: float(rec[c]) if rec[c] not in ("", None) else math.nan
                       for c in ("t", "pfe", "ee", "dEE_dxd", "dEE_dxf", "dEE_dX", "cpu_seconds")}
            except ValueError as exc:
                raise ValueError(f"{path}:{line}: {exc}") from exc
            rows.append(RiskRow(level=rec["level"], method=rec["method"],
                                netting_set=rec.get("netting_set") or "", **num))
        return rows


def time_averaged_error(rows, reference, notional: float, columns=("pfe", "ee")) -> dict:
    """Mean over matched dates of ``|x - x_ref| / notional * 100``."""
    ref = {r.key(): r for r in reference}
    out = {}
    for c in columns:
        errs = []
        for r in rows:
            other = ref.get(r.key())
            if other is None:
                continue
            a, b = getattr(r, c), getattr(other, c)
            if math.isfinite(a) and math.isfinite(b):
                errs.append(abs(a - b))
        if errs:
            out[c] = float(np.mean(errs) / notional * 100.0)
    if not out:
        raise ValueError("no dates in common with the reference results")
    return out
