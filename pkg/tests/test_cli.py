from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

from ddrrdps.cli import CSV_COLUMNS, main
from ddrrdps.config import RunConfig

FIXTURES = Path(__file__).parent / "fixtures"
TABLE1_D50_ORACLE = 0.018642354618685724


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    return header, body[0].split(","), [row.split(",") for row in body[1:]]


def report(text):
    return dict(l.split(" = ", 1) for l in text.splitlines() if not l.startswith("#") and " = " in l)


def test_scan_writes_csv_with_parameter_header(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    rc = main(["scan", "--L", "16", "--d-min", "0", "--d-max", "20", "--d-step", "10", "--out", str(out)])
    assert rc == 0
    header, cols, rows = read_csv(out)
    assert tuple(cols) == CSV_COLUMNS
    assert [float(r[0]) for r in rows] == [0.0, 10.0, 20.0]
    assert "# protocol.L = 16" in header
    assert "# channel.beta = 0.2" in header
    # full effective configuration is echoed and parses back
    echoed = RunConfig.from_text("\n".join(h[2:] for h in header))
    assert echoed.L == 16 and echoed.d_max == 20.0
    for r in rows:
        assert len(r[1].split("e")[0].replace(".", "").lstrip("-")) == 10
        assert float(r[7]) == max(0.0, float(r[6]))
    assert "cutoff distance" in capsys.readouterr().err


def test_scan_is_byte_identical_across_runs(tmp_path):
    args = ["scan", "--L", "16", "--d-min", "100", "--d-max", "110", "--d-step", "5"]
    out = tmp_path / "run.csv"
    assert main(args + ["--out", str(out)]) == 0
    first = out.read_bytes()
    assert main(args + ["--out", str(out)]) == 0
    assert out.read_bytes() == first


def test_scan_non_dd_protocol_leaves_g_min_empty(tmp_path):
    out = tmp_path / "k3.csv"
    assert main(["scan", "--protocol", "passive-rrdps", "--L", "16", "--d-min", "0",
                 "--d-max", "0", "--d-step", "1", "--out", str(out)]) == 0
    _, cols, rows = read_csv(out)
    assert rows[0][cols.index("G_min")] == ""


def test_scan_empty_grid_fails(capsys):
    rc = main(["scan", "--d-min", "50", "--d-max", "10"])
    assert rc != 0
    err = capsys.readouterr()
    assert "empty distance grid" in err.err
    assert err.out == ""


def test_unwritable_output_fails(tmp_path, capsys):
    rc = main(["optimize", "-d", "10", "--L", "16", "--out", str(tmp_path / "missing" / "x.txt")])
    assert rc != 0
    assert "cannot write output file" in capsys.readouterr().err


def test_config_file_and_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("protocol.L = 16\npoint.distance = 200\n")
    out = tmp_path / "opt.txt"
    assert main(["optimize", "--config", str(cfg), "--out", str(out)]) == 0
    r = report(out.read_text())
    assert r["v_th"] == "3" and float(r["rate_raw"]) > 0
    cfg.write_text("detector.eta = 0.2\n")
    assert main(["optimize", "--config", str(cfg)]) != 0
    assert "unknown key 'detector.eta'" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("protocol.L = 128\n")
    out = tmp_path / "opt.txt"
    assert main(["optimize", "--config", str(cfg), "--L", "16", "-d", "10", "--out", str(out)]) == 0
    assert "# protocol.L = 16" in out.read_text()


def test_optimize_zero_distance_is_the_highest_rate(capsys):
    assert main(["optimize", "--L", "16", "-d", "0"]) == 0
    r0 = float(report(capsys.readouterr().out)["rate_raw"])
    assert main(["optimize", "--L", "16", "-d", "30"]) == 0
    r30 = float(report(capsys.readouterr().out)["rate_raw"])
    assert r0 > r30 > 0


def test_optimize_fixed_point_reports_intermediates(capsys):
    assert main(["optimize", "--L", "16", "-d", "200", "--mu", "0.0535", "--v-th", "3"]) == 0
    r = report(capsys.readouterr().out)
    assert float(r["mu"]) == 0.0535 and r["v_th"] == "3"
    for key in ("Q", "e_b", "G_min", "e_src", "rate_raw", "rate_clamped", "no_positive_rate"):
        assert key in r
    assert main(["optimize", "--mu", "1.0"]) != 0


def test_optimize_l16_at_200(capsys):
    assert main(["optimize", "--L", "16", "-d", "200"]) == 0
    r = report(capsys.readouterr().out)
    assert r["v_th"] == "3"
    assert 0.0535 / 2 < float(r["mu"]) < 0.0535 * 2


def test_lp_vacuum_fixture(capsys):
    assert main(["lp", str(FIXTURES / "vacuum.lp")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "status optimal"
    assert float(out[1].split()[1]) == 0.0
    assert float(out[2].split()[1]) == 1.0


def test_lp_table1_fixture_matches_oracle(capsys):
    assert main(["lp", str(FIXTURES / "table1_d50.lp")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert float(out[1].split()[1]) == pytest.approx(TABLE1_D50_ORACLE, abs=1e-12)


def test_lp_emit_reproduces_fixture(capsys):
    assert main(["lp", "--emit", "-d", "50", "--mu", "1"]) == 0
    assert capsys.readouterr().out == (FIXTURES / "table1_d50.lp").read_text()


def test_lp_parse_error_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.lp"
    bad.write_text("minimize 0 1\nnorm: 1 1 = 1\nT1: 1 oops <= 2\n")
    assert main(["lp", str(bad)]) != 0
    assert "line 3:" in capsys.readouterr().err


def test_lp_needs_exactly_one_source(capsys):
    assert main(["lp"]) != 0
    assert main(["lp", "--emit", str(FIXTURES / "vacuum.lp")]) != 0


def test_mc_vacuum_all_zero(tmp_path):
    cfg = tmp_path / "mc.cfg"
    cfg.write_text("detector.dark_per_pulse = 0\nmc.mu = 0\nmc.trials = 1000\n")
    out = tmp_path / "mc.csv"
    assert main(["mc", "--config", str(cfg), "--out", str(out)]) == 0
    header, cols, rows = read_csv(out)
    assert cols == ["quantity", "estimate", "std_error", "analytic", "z_score"]
    assert [r[0] for r in rows] == ["Q", "Q_2", "Q_3", "e_b"]
    for r in rows:
        assert all(float(v) == 0.0 for v in r[1:])
    assert "# generator = PCG64" in header
    assert "# mc.seed = 20160101" in header


def test_mc_table_one_within_five_sigma(tmp_path):
    out = tmp_path / "mc.csv"
    assert main(["mc", "-d", "50", "--trials", "1000000", "--out", str(out)]) == 0
    _, _, rows = read_csv(out)
    for r in rows:
        assert abs(float(r[4])) <= 5


def test_mc_fixed_seed_rerun_identical(tmp_path):
    args = ["mc", "--trials", "20000", "--seed", "7"]
    out = tmp_path / "run.csv"
    assert main(args + ["--out", str(out)]) == 0
    first = out.read_bytes()
    assert main(args + ["--out", str(out)]) == 0
    assert out.read_bytes() == first


def test_module_entry_point_and_exit_codes():
    ok = subprocess.run([sys.executable, "-m", "ddrrdps", "lp", str(FIXTURES / "vacuum.lp")],
                        capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.startswith("status optimal") and ok.stderr == ""
    bad = subprocess.run([sys.executable, "-m", "ddrrdps", "scan", "--d-step", "0"],
                         capture_output=True, text=True)
    assert bad.returncode != 0 and bad.stdout == "" and "error" in bad.stderr
    usage = subprocess.run([sys.executable, "-m", "ddrrdps", "nope"], capture_output=True, text=True)
    assert usage.returncode != 0
