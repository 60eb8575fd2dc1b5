import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from orbital_heat.cli import EXIT_INPUT, EXIT_LIMIT, EXIT_OK, main, parse_grid, parse_int, parse_point


def run(tmp_path, *argv):
    code = main([*argv, "--out", str(tmp_path)])
    return code


def load(tmp_path, stem):
    return json.loads((tmp_path / f"{stem}.json").read_text())


def test_parsers():
    assert parse_int("2^14") == 16384 and parse_int("12") == 12
    assert np.allclose(parse_grid("1:3:3"), [1, 2, 3])
    assert np.allclose(parse_grid("1:100:3", log=True), [1, 10, 100])
    assert np.allclose(parse_grid("1, 2,4"), [1, 2, 4])
    assert parse_point("0,0,2").h == 2
    with pytest.raises(ValueError):
        parse_grid("1:2")
    with pytest.raises(ValueError):
        parse_point("1,2")


def test_count_writes_csv_and_json(tmp_path):
    assert run(tmp_path, "count", "--group", "cyclic:1.0", "--radius", "10.5") == EXIT_OK
    doc = load(tmp_path, "count")
    assert doc["elements"] == 21 and doc["provenance"]["tool"] == "orbital-heat"
    assert doc["provenance"]["config"]["group"] == "cyclic:1.0"
    rows = list(csv.reader(open(tmp_path / "count.csv")))
    assert rows[0] == ["rho", "N", "N_tilde"]
    assert [int(r[1]) for r in rows[1:]] == [2 * k + 1 for k in range(11)]


def test_verify_commands(tmp_path):
    assert run(tmp_path, "verify", "stieltjes", "--group", "schottky:3") == EXIT_OK
    assert load(tmp_path, "verify_stieltjes")["pass"]
    assert run(tmp_path, "verify", "gaussian-tail") == EXIT_OK
    assert run(tmp_path, "verify", "sandwich") == EXIT_OK
    assert run(tmp_path, "verify", "chop", "--alpha", "0.5", "--time-grid", "10:1000:5") == EXIT_OK
    assert len(load(tmp_path, "verify_chop")["per_k"]) == 2
    assert run(tmp_path, "verify", "upper-bound", "--group", "trivial", "--radius", "12") == EXIT_OK
    assert (tmp_path / "verify_upper_bound.csv").exists()
    assert run(tmp_path, "verify", "log-limit", "--group", "trivial") == EXIT_OK
    assert load(tmp_path, "verify_log_limit")["slope"] == pytest.approx(-1, abs=1e-6)


def test_verify_inadequate_radius_is_a_limit(tmp_path):
    assert run(tmp_path, "verify", "upper-bound", "--group", "schottky:3", "--radius", "8") == EXIT_LIMIT


def test_element_cap_is_a_limit(tmp_path):
    code = run(tmp_path, "count", "--group", "schottky:3", "--radius", "14", "--max-elements", "10")
    assert code == EXIT_LIMIT


def test_bad_input_exit_codes(tmp_path):
    assert run(tmp_path, "count", "--group", "nosuch") == EXIT_INPUT
    assert run(tmp_path, "count", "--group", str(tmp_path / "missing.json")) == EXIT_INPUT
    assert run(tmp_path, "graph", "absorbed", "poincare") == EXIT_INPUT
    assert run(tmp_path, "verify", "stieltjes") == EXIT_INPUT
    assert run(tmp_path, "frobnicate") == EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(tmp_path, "count", "--group", str(bad)) == EXIT_INPUT


def test_graph_commands(tmp_path):
    assert run(tmp_path, "graph", "star", "decay", "--d", "2", "--n", "2^12") == EXIT_OK
    fit = load(tmp_path, "graph_star_decay")["fit"]
    assert fit["alpha"] == pytest.approx(0.5, abs=0.05)
    assert run(tmp_path, "graph", "absorbed", "decay", "--n", "2^10") == EXIT_OK
    assert run(tmp_path, "graph", "star", "poincare", "--r", "2,4", "--trials", "200") == EXIT_OK
    doc = load(tmp_path, "graph_star_poincare")
    assert doc["within_bound"] and doc["dominated"]
    assert run(tmp_path, "graph", "mixed", "volume", "--r", "100") == EXIT_OK
    assert run(tmp_path, "graph", "mixed", "doubling", "--r", "16") == EXIT_OK
    assert run(tmp_path, "graph", "mixed", "spectrum", "--gf-model", "weighted_ray") == EXIT_OK
    assert run(tmp_path, "graph", "star", "sobolev", "--depth", "33", "--trials-sobolev", "2") == EXIT_OK


def test_short_fit_window_is_a_limit(tmp_path):
    assert run(tmp_path, "graph", "star", "decay", "--n", "64", "--window", "16:64") == EXIT_LIMIT


def test_discretise_command(tmp_path):
    assert run(tmp_path, "discretise", "--group", "cyclic:1.0", "--radius", "6") == EXIT_OK
    doc = load(tmp_path, "discretise")
    assert doc["quasi_isometry"]["connected"]
    assert (tmp_path / "net_graph.json").exists()
    assert run(tmp_path, "discretise", "--single-point") == EXIT_OK
    code = run(tmp_path, "discretise", "--group", "schottky:3", "--radius", "8", "--eps", "0.5", "--cloud", "orbit")
    assert code == EXIT_LIMIT


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["graph", "star", "poincare", "--r", "4", "--trials", "500", "--seed", "3", "--out", str(out)]) == 0
    ja, jb = load(a, "graph_star_poincare"), load(b, "graph_star_poincare")
    ja["provenance"].pop("config"), jb["provenance"].pop("config")
    assert ja == jb


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "orbital_heat", "verify", "gaussian-tail", "--out", str(tmp_path)],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    assert json.loads(res.stdout)["pass"] is True
