import json
import subprocess
import sys

import numpy as np
import pytest

from dynkin import ConfigError, load_config, parse_config, run_solve
from dynkin.cli import main as cli_main
from dynkin.pipeline import self_check

BASE = """
[model]
family = gbm
beta = 0.05
sigma = 0.3

[payoff]
catalog = game_call
k = 100
eps = 5

[grid]
x_min = 6.25
x_max = 1600
n_points = 201

[mc]
enabled = false
seed = 7

[output]
csv = solution.csv
json = report.json
"""


def write_cfg(tmp_path, text, name="problem.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_roundtrip(tmp_path):
    cfg = parse_config(BASE)
    r = cfg.resolved()
    assert r["model"]["family"] == "gbm"
    assert r["payoff"]["k"] == 100
    assert r["grid"]["n_points"] == 201
    assert r["mc"]["enabled"] is False


def test_parse_rejects_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[nope]\nx = 1\n")


def test_parse_rejects_small_grid():
    with pytest.raises(ConfigError, match="n_points"):
        parse_config(BASE.replace("n_points = 201", "n_points = 50"))


def test_explicit_pieces_and_sandwich_validation():
    good = """
[model]
family = gbm
beta = 0.05
sigma = 0.3
[payoff]
g1_piece = (0, 100, 0, 0, 0, 0)
g1_piece = (100, inf, -100, 1, 0, 0)
g2_piece = (0, 100, 5, 0, 0, 0)
g2_piece = (100, inf, -95, 1, 0, 0)
[grid]
x_min = 10
x_max = 1000
n_points = 101
"""
    cfg = parse_config(good)
    pay = cfg.build_payoffs()
    assert list(pay.kinks) == [100.0]
    # swap the payoffs: g1 > g2 must be rejected, naming the offending range
    bad = good.replace("g1_piece = (0, 100, 0, 0, 0, 0)",
                       "g1_piece = (0, 100, 9, 0, 0, 0)").replace(
        "g1_piece = (100, inf, -100, 1, 0, 0)",
        "g1_piece = (100, inf, -91, 1, 0, 0)")
    with pytest.raises(ConfigError, match="sandwich"):
        parse_config(bad)


def test_run_solve_emits_contract_csv(tmp_path):
    cfg = load_config(write_cfg(tmp_path, BASE))
    cfg.output["dir"] = str(tmp_path)
    sol = run_solve(cfg)
    csv = tmp_path / "solution.csv"
    lines = csv.read_text().strip().split("\n")
    assert lines[0] == "x,g1,g2,V,W_of_Fx,in_E1,in_E2"
    assert len(lines) == len(sol.xgrid) + 1
    # floats round-trip exactly
    row = lines[1].split(",")
    assert float(row[0]) == sol.xgrid[0]
    assert float(row[3]) == sol.V.values[0]
    assert row[5] in "01" and row[6] in "01"
    # the seller region indicator flips at the strike
    xs = np.array([float(l.split(",")[0]) for l in lines[1:]])
    in2 = np.array([int(l.split(",")[6]) for l in lines[1:]])
    assert np.all(in2[xs < 100.0 - 1e-9] == 0)
    assert np.all(in2[xs >= 100.0] == 1)


def test_reemission_is_byte_identical(tmp_path):
    cfg = load_config(write_cfg(tmp_path, BASE))
    cfg.output["dir"] = str(tmp_path)
    run_solve(cfg)
    a = (tmp_path / "report.json").read_bytes()
    b_csv = (tmp_path / "solution.csv").read_bytes()
    run_solve(cfg)
    assert (tmp_path / "report.json").read_bytes() == a
    assert (tmp_path / "solution.csv").read_bytes() == b_csv
    doc = json.loads(a)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    assert blob.encode() == a  # canonical serialization round-trips


def test_self_check_clean(tmp_path):
    cfg = load_config(write_cfg(tmp_path, BASE))
    sol = run_solve(cfg, emit=False)
    assert self_check(sol) == []


def test_truncation_warning_on_diverging_growth(tmp_path):
    # quadratic lower payoff grows faster than psi: the tail trend diverges,
    # the boundary anchors fall back to pins and the report flags truncation
    text = """
[model]
family = gbm
beta = 0.05
sigma = 0.3
[payoff]
g1_piece = (0, inf, 0, 0, 1, 0)
g2_piece = (0, inf, 1, 0, 1, 0)
[grid]
x_min = 0.5
x_max = 8
n_points = 151
"""
    cfg = parse_config(text)
    sol = run_solve(cfg, emit=False)
    assert sol.truncation_warning
    assert sol.linf.tag == "diverging"


def test_cli_solve_and_check(tmp_path):
    path = write_cfg(tmp_path, BASE)
    rc = cli_main(["solve", path, "--output", str(tmp_path), "--check"])
    assert rc == 0
    assert (tmp_path / "solution.csv").exists()
    assert (tmp_path / "report.json").exists()


def test_cli_invalid_config_exit_1(tmp_path):
    path = write_cfg(tmp_path, BASE.replace("n_points = 201", "n_points = 5"))
    assert cli_main(["solve", path]) == 1


def test_cli_catalog_list(capsys):
    assert cli_main(["catalog", "list"]) == 0
    out = capsys.readouterr().out
    assert "game_call" in out and "scaled_call" in out


def test_cli_flag_overrides(tmp_path):
    path = write_cfg(tmp_path, BASE)
    rc = cli_main(["solve", path, "--grid-points", "301",
                   "--x-min", "12.5", "--x-max", "800",
                   "--output", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "solution.csv").read_text().strip().split("\n")
    xs = [float(l.split(",")[0]) for l in lines[1:]]
    assert xs[0] == 12.5 and xs[-1] == 800.0


def test_cli_simulate_smoke(tmp_path):
    text = BASE.replace("enabled = false", "enabled = true\nn_paths = 300\ndt = 0.01\nhorizon = 20\nx0 = 50\nprobe_barriers = 80, 120")
    path = write_cfg(tmp_path, text)
    rc = cli_main(["simulate", path, "--output", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["mc"]["enabled"] is True
    assert doc["mc"]["value_estimate"]["mean"] > 0
    assert len(doc["mc"]["buyer_probes"]) == 3
    assert doc["mc"]["violations"] == []


def test_cli_simulate_deterministic_bytes(tmp_path):
    text = BASE.replace("enabled = false", "enabled = true\nn_paths = 200\ndt = 0.01\nhorizon = 10\nx0 = 50")
    path = write_cfg(tmp_path, text)
    assert cli_main(["simulate", path, "--output", str(tmp_path)]) == 0
    a = (tmp_path / "report.json").read_bytes()
    assert cli_main(["simulate", path, "--output", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").read_bytes() == a


def test_cli_entry_point_subprocess(tmp_path):
    path = write_cfg(tmp_path, BASE)
    proc = subprocess.run([sys.executable, "-m", "dynkin.cli", "solve", path,
                           "--output", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "solved:" in proc.stdout


def test_catalog_params_flow_through_from_config():
    # lowercase config keys must reach the catalog builder (regression: a
    # mismatch here silently solved the default strike)
    text = BASE.replace("k = 100", "k = 50").replace("eps = 5", "penalty = 2") \
               .replace("x_min = 6.25", "x_min = 4").replace("x_max = 1600", "x_max = 800")
    cfg = parse_config(text)
    entry = cfg.catalog_entry()
    assert entry.params["K"] == 50
    assert entry.params["eps"] == 2
    assert list(cfg.build_payoffs().kinks) == [50.0]
    with pytest.raises(ConfigError, match="unknown catalog parameter"):
        parse_config(BASE.replace("eps = 5", "fee = 5"))
