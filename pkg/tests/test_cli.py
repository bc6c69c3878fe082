import json
import math
import os

import numpy as np
import pytest

from imdd_capacity.channel_core import validate_channel
from imdd_capacity.cli_reports import (SweepConfig, fmt, main, run_nu_curve, run_sweep,
                                       run_table1)


@pytest.fixture
def channel_file(tmp_path):
    path = tmp_path / "ch.json"
    path.write_text(json.dumps({"H": [[1, 1.5, 3], [2, 2, 1]], "A": 1.0, "alpha": 0.9}))
    return str(path)


def _read_all(d):
    return {n: open(os.path.join(d, n), "rb").read() for n in sorted(os.listdir(d))}


def test_fmt():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(float("nan")) == "nan"
    assert fmt(12345678901.0) == "1.23456789e+10"


def test_sweep_outputs_are_byte_stable(channel_file, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        cfg = SweepConfig(channel_file, [0.9, 1.6], -10.0, 20.0, 4, str(out))
        reports, failures = run_sweep(cfg)
        assert not failures and len(reports) == 8
        assert all(r.ordering_ok() for r in reports)
        outs.append(_read_all(out))
    assert outs[0] == outs[1]
    files = outs[0]
    assert "bounds_alpha0.9.csv" in files and "ub_mu_alpha0.9.dat" in files
    csv = files["bounds_alpha0.9.csv"].decode()
    assert csv.splitlines()[0] == "A_dB,lb_uniform,lb_exp,ub_peak,ub_mu,ub_mu_delta,ub_trace,nu"
    assert "\r" not in csv and len(csv.splitlines()) == 5
    man = json.loads(files["manifest.json"])
    assert man["inf_sup_relaxation"] is True
    assert man["dB_convention"] == "A_dB = 10*log10(A)"


def test_threads_do_not_change_bytes(channel_file, tmp_path):
    runs = []
    for threads in (1, 2):
        out = tmp_path / f"t{threads}"
        main(["--channel", channel_file, "--out", str(out), "--threads", str(threads),
              "bounds", "--amin-db", "0", "--amax-db", "10", "--steps", "3", "--alpha", "0.3"])
        runs.append(_read_all(out))
    assert runs[0] == runs[1]


@pytest.mark.parametrize("kw", [dict(steps=1), dict(amin_db=5.0, amax_db=5.0), dict(alphas=[])])
def test_grid_validation(kw):
    base = dict(channel=None, alphas=[0.9], amin_db=0.0, amax_db=10.0, steps=3)
    base.update(kw)
    with pytest.raises(ValueError):
        SweepConfig(**base).grid()


def test_failures_recorded_not_fatal(tmp_path):
    m = validate_channel([[1, 1.5, 3], [2, 2, 1]], 1.0, 0.9)
    cfg = SweepConfig(m, [0.9], -10.0, 5000.0, 2, str(tmp_path))
    reports, failures = run_sweep(cfg)
    assert len(reports) + len(failures) == 2
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["failures"] == failures


def test_decompose_and_tikz(channel_file, tmp_path, capsys):
    main(["decompose", "--channel", channel_file])
    doc = json.loads(capsys.readouterr().out)
    assert [c["U"] for c in doc["cells"]] == [[1, 2], [1, 3], [2, 3]]
    assert doc["V_H"] == pytest.approx(10.5)
    main(["decompose", "--channel", channel_file, "--out", str(tmp_path), "--tikz-data"])
    rows = (tmp_path / "cell_13.dat").read_text().splitlines()
    assert len(rows) == 5 and len(rows[0].split()) == 2


def test_minenergy_cli(channel_file, capsys):
    main(["--channel", channel_file, "minenergy", "--xbar", "2,2.5"])
    doc = json.loads(capsys.readouterr().out)
    assert doc["energy"] == pytest.approx(doc["lp_energy"], abs=1e-9)


def test_maxvar_cli(tmp_path, capsys):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"H": [[1.3, 0.6, 1, 0.1], [2.1, 4.5, 0.7, 0.5]], "A": 1, "alpha": 1.5}))
    main(["maxvar", "--channel", str(path)])
    doc = json.loads(capsys.readouterr().out)
    assert doc["value_A2"] == pytest.approx(16.3687, rel=1e-4)
    assert set(doc["pmf"]) == {"0000", "1111"}


def test_table1_rows():
    rows = run_table1()
    assert len(rows) == 7
    assert max(r["rel_error"] for r in rows) < 1e-3


def test_nu_curve(channel_file, tmp_path):
    m = validate_channel([[1, 1.5, 3], [2, 2, 1]], 1.0, 0.9)
    assert len(run_nu_curve(m, [0.5])) == 1
    main(["nu-curve", "--channel", channel_file, "--out", str(tmp_path),
          "--alpha-min", "1.3", "--alpha-step", "0.05"])
    data = np.loadtxt(tmp_path / "nu.dat")
    assert np.all(data[:, 1] < 0) and np.all(np.diff(data[:, 1]) >= -1e-9)


def test_kpoint_cli(channel_file, tmp_path):
    main(["kpoint", "--channel", channel_file, "--out", str(tmp_path), "--amin-db", "0",
          "--amax-db", "3", "--steps", "2", "--k", "2", "--samples", "20000",
          "--search-samples", "10000", "--budget", "60", "--starts", "2"])
    assert (tmp_path / "manifest_kpoint.json").exists()
    lines = (tmp_path / "kpoint_k2_alpha0.9.csv").read_text().splitlines()
    assert lines[0] == "A_dB,kpoint_k2,std_error"
    assert all(math.isfinite(float(l.split(",")[1])) for l in lines[1:])
