"""Command line interface: ``ccrcos <subcommand> [options]``.

Subcommands
-----------
gen-portfolio  draw a seeded random portfolio (and optionally write the model file)
pfe, ee, sens  COS exposure profiles over equidistant dates (sens adds EE sensitivities)
mc             the same profile from the Monte Carlo oracle
converge       PFE error against the high-setting COS reference, sweeping K or J
compare        CPU time and accuracy of COS and MC runs on one or more portfolios

Exit status is 0 on success, 2 for invalid input files or options and 1
for any other failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

from .instruments import trade_from_dict
from .model import ModelError, ModelParams, usd_jpy_params, save_model
from .portfolio import PARTITION_MODES, GeneratorSpec, Portfolio, generate, partition_counterparty, save_portfolio
from .report import (
    RunManifest,
    Settings,
    cos_rows,
    file_sha256,
    manifest_path,
    mc_rows,
    prepare_portfolio,
    read_results,
    run_dates,
    software_versions,
    time_averaged_error,
    write_results,
)
from .studies import REFERENCE_J, REFERENCE_K, compare, converge


class InputError(Exception):
    """Invalid input file or option; reported as ``path:line: message``."""


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def load_model_file(path) -> ModelParams:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}:1: model file must hold a JSON object")
    try:
        return ModelParams.from_dict(data)
    except (ModelError, TypeError, ValueError) as exc:
        raise InputError(f"{path}:1: {exc}") from exc


def load_portfolio_file(path) -> Portfolio:
    """Parse a portfolio file, anchoring errors to the offending record's line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    dec = json.JSONDecoder()
    pos = len(text) - len(text.lstrip())
    if not text.startswith("[", pos):
        raise InputError(f"{path}:{_line_of(text, pos)}: portfolio file must hold a JSON array of trades")
    pos += 1
    trades = []
    while True:
        while pos < len(text) and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= len(text):
            raise InputError(f"{path}:{_line_of(text, pos)}: unterminated array")
        if text[pos] == "]":
            break
        line = _line_of(text, pos)
        try:
            rec, pos = dec.raw_decode(text, pos)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(rec, dict):
            raise InputError(f"{path}:{line}: trade record must be an object")
        try:
            trades.append(trade_from_dict(rec))
        except (KeyError, TypeError, ValueError) as exc:
            msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
            raise InputError(f"{path}:{line}: {msg}") from exc
    try:
        return Portfolio(tuple(trades))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _settings_from_args(args) -> Settings:
    base = Settings()
    if getattr(args, "settings", None):
        try:
            base = Settings.load(args.settings)
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.settings}:{exc.lineno}: {exc.msg}") from exc
        except (TypeError, ValueError) as exc:
            raise InputError(f"{args.settings}:1: {exc}") from exc
    changes = {
        "K": args.terms, "J": args.quad, "J_mom": args.quad_mom, "TOL": args.tol, "L": args.L,
        "alpha": args.alpha, "dates": args.dates, "level": args.level, "partition": args.partition,
        "threads": args.threads, "seed": getattr(args, "seed", None),
        "batch_size": getattr(args, "batch_size", None),
    }
    nsim = getattr(args, "nsim", None)
    if isinstance(nsim, list) and len(nsim) == 1:
        changes["n_sim"] = nsim[0]
    try:
        return base.replace(**changes)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _manifest(args, settings: Settings, files: dict, start_wall: float, start_cpu: float, **extra) -> RunManifest:
    return RunManifest(
        command=" ".join(args.argv),
        settings=settings.to_dict(),
        seeds={"mc": settings.seed},
        file_hashes={str(p): file_sha256(p) for p in files.values() if p},
        wall_seconds=time.perf_counter() - start_wall,
        cpu_seconds=time.process_time() - start_cpu,
        versions=software_versions(),
        extra=extra,
    )


def _write_table(header, rows, out):
    if out:
        fh = open(out, "w", newline="")
    else:
        fh = sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    finally:
        if out:
            fh.close()


def _inputs(args):
    model = load_model_file(args.model) if args.model else usd_jpy_params()
    portfolio = load_portfolio_file(args.portfolio)
    return portfolio, model


def cmd_profile(args) -> int:
    wall, cpu = time.perf_counter(), time.process_time()
    settings = _settings_from_args(args)
    portfolio, model = _inputs(args)
    portfolio = prepare_portfolio(portfolio, settings)
    if args.command == "mc":
        rows = run_dates(mc_rows, portfolio, model, settings, sensitivities=args.sens)
    else:
        rows = run_dates(cos_rows, portfolio, model, settings, sensitivities=args.command == "sens")
    extra = {}
    if args.reference:
        try:
            ref = read_results(args.reference)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"{args.reference}: {exc}") from exc
        cols = {"pfe": ("pfe",), "ee": ("ee",), "sens": ("ee", "dEE_dxd", "dEE_dxf", "dEE_dX"),
                "mc": ("pfe", "ee")}[args.command]
        err = time_averaged_error(rows, ref, portfolio.total_notional, cols)
        extra["time_averaged_error_pct_of_notional"] = err
        stream = sys.stderr if not args.out else sys.stdout
        for k, v in err.items():
            print(f"time-averaged |error| in {k}: {v:.6g}% of notional", file=stream)
    files = {"portfolio": args.portfolio, "model": args.model, "settings": args.settings,
             "reference": args.reference}
    man = _manifest(args, settings, files, wall, cpu, **extra)
    write_results(rows, args.out or sys.stdout, man)
    return 0


def cmd_gen_portfolio(args) -> int:
    model = load_model_file(args.model) if args.model else usd_jpy_params()
    try:
        spec = GeneratorSpec(n_trades=args.n_trades, seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    pf = generate(spec, model)
    if args.partition:
        pf = partition_counterparty(pf, args.partition)
    if args.out:
        save_portfolio(pf, args.out)
    else:
        sys.stdout.write(pf.to_json())
    if args.write_model:
        save_model(model, args.write_model)
    return 0


def cmd_converge(args) -> int:
    wall, cpu = time.perf_counter(), time.process_time()
    settings = _settings_from_args(args)
    portfolio, model = _inputs(args)
    portfolio = prepare_portfolio(portfolio, settings)
    res = converge(portfolio, model, settings, args.sweep, args.values, args.t, args.ref_terms, args.ref_quad)
    rows = [(p.sweep, p.value, repr(p.pfe), repr(p.pfe_ref), repr(p.rel_error)) for p in res.points]
    _write_table(("sweep", "value", "pfe", "pfe_ref", "rel_error"), rows, args.out)
    unit = "log-log" if res.slope_kind == "loglog" else "log10 error per unit"
    stream = sys.stdout if args.out else sys.stderr
    print(f"fitted slope ({unit}) over {args.sweep} at t={res.t:.6g}: {res.slope:.4g}", file=stream)
    if args.out:
        man = _manifest(args, settings, {"portfolio": args.portfolio, "model": args.model,
                                         "settings": args.settings}, wall, cpu,
                        t=res.t, slope=res.slope, slope_kind=res.slope_kind,
                        reference={"K": args.ref_terms, "J": args.ref_quad})
        manifest_path(args.out).write_text(man.to_json())
    return 0


def cmd_compare(args) -> int:
    wall, cpu = time.perf_counter(), time.process_time()
    settings = _settings_from_args(args)
    model = load_model_file(args.model) if args.model else usd_jpy_params()
    pfs = [(Path(p).name, prepare_portfolio(load_portfolio_file(p), settings)) for p in args.portfolio]
    table = compare(pfs, model, settings, args.nsim or (settings.n_sim,), args.ref_terms, args.ref_quad)
    fields = [f.name for f in dataclasses.fields(table[0])] if table else []
    _write_table(fields, [[repr(getattr(r, f)) if isinstance(getattr(r, f), float) else getattr(r, f)
                           for f in fields] for r in table], args.out)
    if args.out:
        files = {f"portfolio{i}": p for i, p in enumerate(args.portfolio)}
        files["model"] = args.model
        man = _manifest(args, settings, files, wall, cpu, reference={"K": args.ref_terms, "J": args.ref_quad})
        manifest_path(args.out).write_text(man.to_json())
    return 0


def _add_engine_flags(p, mc=False):
    p.add_argument("--settings", help="JSON settings file; flags override its values")
    p.add_argument("--level", choices=("netting", "counterparty"))
    p.add_argument("--partition", choices=PARTITION_MODES,
                   help="reassign netting sets before the run")
    p.add_argument("--alpha", type=float, help="PFE confidence level (default 0.975)")
    p.add_argument("--terms", type=int, help="expansion terms K (default 32)")
    p.add_argument("--quad", type=int, help="quadrature points per dimension J (default 40)")
    p.add_argument("--quad-mom", type=int, help="points per dimension for the moment pass (default 20)")
    p.add_argument("--tol", type=float, help="integration-range tail probability (default 1e-12)")
    p.add_argument("--L", type=float, help="support half-width in standard deviations (default 8)")
    p.add_argument("--dates", type=int, help="number of equidistant exposure dates (default 20)")
    p.add_argument("--threads", type=int,
                   help="worker threads over dates (default: $CCR_COS_THREADS or all cores)")
    p.add_argument("--seed", type=int, help="Monte Carlo master seed")
    p.add_argument("--nsim", type=int, nargs="+" if mc == "many" else None,
                   help="Monte Carlo scenarios" + (" (several allowed)" if mc == "many" else ""))
    p.add_argument("--batch-size", type=int, help="Monte Carlo scenarios per batch")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccrcos", description="Counterparty exposure by Fourier-cosine expansion")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-portfolio", help="write a seeded random portfolio")
    g.add_argument("--n-trades", type=int, default=100)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--model", help="model file used for par rates (default: built-in USD/JPY set)")
    g.add_argument("--partition", choices=PARTITION_MODES)
    g.add_argument("--write-model", help="also write the model file used")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_portfolio)

    for name, helptext in (("pfe", "COS PFE (and EE) profile"), ("ee", "COS EE (and PFE) profile"),
                           ("sens", "COS profile with EE sensitivities"), ("mc", "Monte Carlo profile")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--portfolio", required=True)
        p.add_argument("--model")
        _add_engine_flags(p)
        p.add_argument("--reference", help="results CSV to report the time-averaged error against")
        if name == "mc":
            p.add_argument("--sens", action="store_true", help="add common-random-number sensitivities")
        p.add_argument("--out", help="results CSV (default: stdout)")
        p.set_defaults(func=cmd_profile)

    c = sub.add_parser("converge", help="PFE error against the high-setting reference")
    c.add_argument("--portfolio", required=True)
    c.add_argument("--model")
    _add_engine_flags(c)
    c.add_argument("--sweep", choices=("K", "J"), default="K")
    c.add_argument("--values", type=int, nargs="+", help="sweep points (default depends on sweep and level)")
    c.add_argument("--t", type=float, help="exposure date (default T_max/2)")
    c.add_argument("--ref-terms", type=int, default=REFERENCE_K)
    c.add_argument("--ref-quad", type=int, default=REFERENCE_J)
    c.add_argument("--out")
    c.set_defaults(func=cmd_converge)

    m = sub.add_parser("compare", help="COS vs MC timing and accuracy table")
    m.add_argument("--portfolio", required=True, action="append", help="repeat for several portfolios")
    m.add_argument("--model")
    _add_engine_flags(m, mc="many")
    m.add_argument("--ref-terms", type=int, default=REFERENCE_K)
    m.add_argument("--ref-quad", type=int, default=REFERENCE_J)
    m.add_argument("--out")
    m.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = ["ccrcos"] + argv
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and fail the run
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
