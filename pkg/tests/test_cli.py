import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ccrcos.cli import load_portfolio_file, main
from ccrcos.report import COLUMNS, Settings, manifest_path, read_results, time_averaged_error
from ccrcos.validation import exposure_dates


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    pf, model = d / "pf.json", d / "model.json"
    assert main(["gen-portfolio", "--n-trades", "12", "--seed", "4", "--out", str(pf),
                 "--write-model", str(model)]) == 0
    return d, pf, model


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_date_grid():
    d = exposure_dates(14.8, 20)
    assert d[0] == 0.0 and d[-1] == 14.8 and d.size == 20
    assert d[1] == pytest.approx(14.8 / 19)


def test_gen_portfolio_is_deterministic(files, tmp_path):
    _, pf, model = files
    again = tmp_path / "again.json"
    main(["gen-portfolio", "--n-trades", "12", "--seed", "4", "--out", str(again)])
    assert again.read_text() == pf.read_text()
    assert set(json.loads(model.read_text())) >= {"a_d", "curve_f"}


def test_pfe_profile_and_manifest(files):
    d, pf, model = files
    out = d / "pfe.csv"
    assert main(["pfe", "--portfolio", str(pf), "--model", str(model), "--dates", "4",
                 "--threads", "2", "--out", str(out)]) == 0
    rows = _rows(out)
    assert list(rows[0]) == list(COLUMNS)
    assert [r["method"] for r in rows] == ["COS"] * 4
    assert float(rows[0]["t"]) == 0.0
    assert all(float(r["pfe"]) >= 0 and float(r["ee"]) >= 0 for r in rows)
    man = json.loads(manifest_path(out).read_text())
    assert man["settings"]["K"] == 32 and man["settings"]["dates"] == 4
    assert str(pf) in man["file_hashes"]


def test_thread_count_does_not_change_results(files, monkeypatch):
    d, pf, model = files
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("CCR_COS_THREADS", threads)
        out = d / f"thr{threads}.csv"
        main(["ee", "--portfolio", str(pf), "--dates", "5", "--out", str(out)])
        outs.append([(r["t"], r["pfe"], r["ee"]) for r in _rows(out)])
    assert outs[0] == outs[1]
    assert Settings(threads=0).resolved_threads() == 3


def test_counterparty_partition_grosses_sets(files):
    d, pf, _ = files
    out = d / "cp.csv"
    assert main(["sens", "--portfolio", str(pf), "--level", "counterparty", "--partition", "by_contract_type",
                 "--dates", "3", "--out", str(out)]) == 0
    rows = _rows(out)
    assert {r["level"] for r in rows} == {"counterparty"}
    net = d / "net.csv"
    main(["sens", "--portfolio", str(pf), "--partition", "by_contract_type", "--dates", "3", "--out", str(net)])
    per_set = _rows(net)
    for t in {r["t"] for r in rows}:
        cp = next(r for r in rows if r["t"] == t)
        sets = [r for r in per_set if r["t"] == t]
        assert len(sets) == len({r["netting_set"] for r in per_set})
        for col in ("ee", "dEE_dxd", "dEE_dxf", "dEE_dX"):
            assert float(cp[col]) == pytest.approx(sum(float(r[col]) for r in sets), rel=1e-12, abs=1e-12)


def test_reference_error_metric(files, capsys):
    d, pf, _ = files
    ref = d / "ref.csv"
    main(["pfe", "--portfolio", str(pf), "--terms", "64", "--quad", "60", "--dates", "4", "--out", str(ref)])
    out = d / "cmp.csv"
    capsys.readouterr()
    assert main(["pfe", "--portfolio", str(pf), "--dates", "4", "--reference", str(ref), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "% of notional" in printed
    man = json.loads(manifest_path(out).read_text())
    err = man["extra"]["time_averaged_error_pct_of_notional"]["pfe"]
    rows, ref_rows = read_results(out), read_results(ref)
    notional = load_portfolio_file(pf).total_notional
    manual = np.mean([abs(a.pfe - b.pfe) for a, b in zip(rows, ref_rows)]) / notional * 100
    assert err == pytest.approx(manual, rel=1e-12)
    assert time_averaged_error(rows, rows, notional)["pfe"] == 0.0


def test_mc_profile(files):
    d, pf, _ = files
    out = d / "mc.csv"
    assert main(["mc", "--portfolio", str(pf), "--nsim", "20000", "--seed", "9", "--dates", "3",
                 "--sens", "--out", str(out)]) == 0
    rows = _rows(out)
    assert {r["method"] for r in rows} == {"MC"}
    assert all(r["dEE_dX"] != "" for r in rows)
    again = d / "mc2.csv"
    main(["mc", "--portfolio", str(pf), "--nsim", "20000", "--seed", "9", "--dates", "3", "--sens",
          "--out", str(again)])
    strip = lambda rs: [{k: v for k, v in r.items() if k != "cpu_seconds"} for r in rs]  # noqa: E731
    assert strip(_rows(again)) == strip(rows)


def test_converge_and_compare(files):
    d, pf, _ = files
    out = d / "conv.csv"
    assert main(["converge", "--portfolio", str(pf), "--sweep", "K", "--values", "8", "16", "32",
                 "--ref-terms", "64", "--ref-quad", "40", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [int(r["value"]) for r in rows] == [8, 16, 32]
    assert "slope" in json.loads(manifest_path(out).read_text())["extra"]
    out = d / "compare.csv"
    assert main(["compare", "--portfolio", str(pf), "--dates", "3", "--nsim", "5000", "10000",
                 "--ref-terms", "64", "--ref-quad", "40", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [r["method"] for r in rows] == ["COS", "MC", "MC"]
    assert all(float(r["pfe_error_pct"]) >= 0 for r in rows)


def test_schema_errors_exit_nonzero_with_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('[\n {"id": "a", "kind": "IRS", "notional": 1, "fixed_rate": 0.01,\n'
                   '  "start": 0, "maturity": 2},\n {"id": "b", "kind": "Swaption"}\n]\n')
    assert main(["pfe", "--portfolio", str(bad)]) == 2
    assert f"{bad}:4:" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text('[\n {"id": "a",\n  "kind": }\n]')
    assert main(["pfe", "--portfolio", str(broken)]) == 2
    assert f"{broken}:3:" in capsys.readouterr().err
    model = tmp_path / "model.json"
    model.write_text('{"a_d": 0.01}')
    good = tmp_path / "good.json"
    main(["gen-portfolio", "--n-trades", "2", "--out", str(good)])
    assert main(["pfe", "--portfolio", str(good), "--model", str(model)]) == 2
    assert "missing" in capsys.readouterr().err
    settings = tmp_path / "s.json"
    settings.write_text('{"K": 32, "colour": "red"}')
    assert main(["pfe", "--portfolio", str(good), "--settings", str(settings)]) == 2


def test_settings_file_with_flag_override(files, tmp_path):
    _, pf, _ = files
    settings = tmp_path / "s.json"
    settings.write_text(json.dumps({"K": 48, "J": 30, "dates": 3}))
    out = tmp_path / "o.csv"
    assert main(["ee", "--portfolio", str(pf), "--settings", str(settings), "--quad", "24", "--out", str(out)]) == 0
    man = json.loads(manifest_path(out).read_text())["settings"]
    assert (man["K"], man["J"], man["dates"]) == (48, 24, 3)


def test_module_entry_point(files):
    _, pf, _ = files
    res = subprocess.run([sys.executable, "-m", "ccrcos", "pfe", "--portfolio", str(pf), "--dates", "2"],
                         capture_output=True, text=True, env={**os.environ, "CCR_COS_THREADS": "1"})
    assert res.returncode == 0, res.stderr
    assert res.stdout.splitlines()[0] == ",".join(COLUMNS)
