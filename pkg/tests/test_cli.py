import csv
import io
import json
import math
import subprocess
import sys

import pytest

from rtglue import cli
from rtglue.spectra import load_spectrum

TORUS = ["--torus", "1,1,0.5,0.5"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(out):
    return json.loads(out)["rows"]


def test_spectrum_command(tmp_path, capsys):
    p = tmp_path / "s.txt"
    code, out, _ = run(capsys, "spectrum", *TORUS, "--cutoff", "1000", "--out", str(p))
    assert code == 0
    row = rows_of(out)[0]
    assert row["quantity"] == "scalar_mode_count" and row["lhs"] == row["rhs"] == 80
    sp = load_spectrum(p)
    assert int(sp.plus(0)[1].sum()) == 80
    md = json.loads(out)["metadata"]
    assert "tail_bound" in md and "4*pi^2" in md["spectrum"]["model"]


def test_brute_force_count():
    assert cli.brute_force_count(1, 1, .5, .5, 2 * math.pi ** 2) == 4
    assert cli.brute_force_count(1, 1, .5, .5, 2 * math.pi ** 2 - 1e-9) == 0


@pytest.mark.parametrize("argv, msg", [
    (["det"], "no spectrum source"),
    (["det", *TORUS, "--spectrum", "x.txt"], "not both"),
    (["spectrum", *TORUS], "--out"),
    (["spectrum", "--out", "x.txt"], "no source"),
    (["det", *TORUS, "--tol", "0"], "--tol"),
    (["det", *TORUS, "--r", "2:1:0.5"], "bad grid"),
    (["det", *TORUS, "--bc", "robin"], "unknown boundary"),
    (["det", *TORUS, "--q", "9"], "out of range"),
    (["det", *TORUS, "--format", "xml"], "csv or json"),
    (["det", "--torus", "0,1,0.5,0.5"], "spectra:"),
    (["torsion", "--torus", "1,1,0,0"], "acyclic"),
    (["det", "--torus", "1,1"], "L1,L2,alpha,beta"),
    (["det", "--spectrum", "/nonexistent/s.txt"], "no such file"),
    (["det", "--config", "/nonexistent.cfg"], "config file not found"),
])
def test_config_errors(capsys, argv, msg):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert msg in err
    assert out == ""


def test_det_example(capsys):
    code, out, _ = run(capsys, "det", *TORUS, "--bc", "rel", "--q", "1", "--r", "1")
    assert code == 0
    (row,) = rows_of(out)
    assert abs(row["lhs"] - row["rhs"]) <= row["error_bound"]
    assert (row["q"], row["r"], row["bc"]) == (1, 1.0, "rel")
    assert set(row) == set(cli.COLUMNS)


def test_glue_example(capsys):
    code, out, _ = run(capsys, "glue", *TORUS, "--r", "1", "--L", "1", "--bc", "rel", "--cutoff", "1600")
    assert code == 0
    for row in rows_of(out):
        assert abs(row["residual"]) < 1e-6


def test_glue_closed_circle_rows(capsys):
    code, out, _ = run(capsys, "glue", *TORUS, "--r", "0.8", "--L", "1.2", "--theta0", "0.3", "--q", "1,2")
    assert code == 0
    rows = rows_of(out)
    assert sum(r["bc"] == "closed" for r in rows) == 2


def test_adiabatic_example(capsys):
    code, out, _ = run(capsys, "adiabatic", *TORUS, "--r", "0.5:8:0.5")
    assert code == 0
    rows = rows_of(out)
    last = [r for r in rows if r["quantity"].startswith("adiabatic") and r["r"] == 8.0]
    assert len(last) == 4
    for r in last:
        assert abs(r["residual"]) < 1e-6
    zero = [r for r in last if r["bc"] in ("P_minus_L0-rel", "P_plus_L1-abs")]
    assert all(r["rhs"] == 0 for r in zero)
    rates = [r for r in rows if r["quantity"].startswith("decay_rate")]
    assert len(rates) == 2


def test_flow_and_determinism(capsys):
    a = run(capsys, "flow", "--paths", "10", "--seed", "3")
    b = run(capsys, "flow", "--paths", "10", "--seed", "3")
    assert a[0] == 0 and a[1] == b[1]
    assert len(rows_of(a[1])) == 10


def test_json_byte_identical(capsys):
    a = run(capsys, "det", *TORUS, "--q", "0,1", "--r", "0.5,1")
    b = run(capsys, "det", *TORUS, "--q", "0,1", "--r", "0.5,1")
    assert a[1] == b[1]


def test_csv_round_trip(capsys):
    code, out, _ = run(capsys, "det", *TORUS, "--q", "2", "--format", "csv")
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    j = rows_of(run(capsys, "det", *TORUS, "--q", "2")[1])
    assert float(rows[0]["lhs"]) == j[0]["lhs"]
    assert any(ln.startswith("# versions:") for ln in out.splitlines())


def test_torsion_command(capsys):
    code, out, _ = run(capsys, "torsion", *TORUS, "--r", "0.5,1,2", "--L", "1")
    assert code == 0
    rows = rows_of(out)
    assert sum(r["quantity"].startswith("slab:") for r in rows) == 15
    assert any(r["quantity"].startswith("gluing:logT_imag_mod2pi") for r in rows)


def test_residual_failure_exit(capsys, monkeypatch):
    def bad(cfg):
        return [cli.row("x", 1.0, 0.0, 1e-9)], cli.run_metadata(cfg)
    monkeypatch.setitem(cli.COMMANDS, "det", bad)
    code, _, err = run(capsys, "det", *TORUS)
    assert code == 1 and "exceeds bound" in err


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# demo\ntorus = 1,1,0.5,0.5\nq = 1\nr = 2\nbc = abs\n")
    code, out, _ = run(capsys, "det", "--config", str(cfg))
    (row,) = rows_of(out)
    assert code == 0 and row["bc"] == "abs" and row["r"] == 2.0
    code, out, _ = run(capsys, "det", "--config", str(cfg), "--r", "0.5")
    assert rows_of(out)[0]["r"] == 0.5
    cfg.write_text("colour = red\n")
    assert run(capsys, "det", "--config", str(cfg))[0] == 2


def test_out_file(tmp_path, capsys):
    p = tmp_path / "t.json"
    code, out, _ = run(capsys, "det", *TORUS, "--q", "0", "--out", str(p))
    assert code == 0 and out == ""
    assert json.loads(p.read_text())["rows"][0]["q"] == 0


def test_threads_env(monkeypatch, capsys):
    base = run(capsys, "det", *TORUS, "--q", "0,1,2,3")[1]
    monkeypatch.setenv(cli.THREADS_ENV, "4")
    assert run(capsys, "det", *TORUS, "--q", "0,1,2,3")[1] == base
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    assert run(capsys, "det", *TORUS)[0] == 2
    monkeypatch.setenv(cli.THREADS_ENV, "0")
    assert run(capsys, "det", *TORUS)[0] == 2


def test_grid_parsing():
    assert cli.parse_grid("0.5:2:0.5") == (0.5, 1.0, 1.5, 2.0)
    assert cli.parse_grid("1,3") == (1.0, 3.0)
    assert len(cli.parse_grid("0.5:8:0.5")) == 16


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rtglue", "flow", "--paths", "2"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["metadata"]["command"] == "flow"
