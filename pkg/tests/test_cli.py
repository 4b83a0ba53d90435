import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from cheeger.cli import EXIT_OK, EXIT_SCHEMA, EXIT_VERIFY, ScenarioError, execute, main, validate_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def run(tmp_path, *args):
    code = main([*args, "--out", str(tmp_path)])
    return code


def report(tmp_path, scenario, task):
    return json.loads((tmp_path / f"{Path(scenario).stem}.{task}.json").read_text())


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_every_scenario_is_valid():
    files = sorted(SCENARIOS.glob("*.json"))
    assert len(files) >= 10
    for f in files:
        validate_scenario(json.loads(f.read_text()))


def test_sweep_closed_form(tmp_path):
    sc = SCENARIOS / "closed_form_full_group.json"
    assert run(tmp_path, "sweep", "--scenario", str(sc)) == EXIT_OK
    rows = report(tmp_path, sc, "sweep")["result"]["rows"]
    for r in rows:
        assert r["total"] == pytest.approx(0.25 * (1 + r["t"]) ** 3, rel=1e-12)
        assert r["sec"] == pytest.approx((1 + r["t"]) / 4, rel=1e-12)


def test_sweep_flags_invalid_t(tmp_path):
    sc = SCENARIOS / "validity_guard.json"
    assert run(tmp_path, "sweep", "--scenario", str(sc)) == EXIT_OK
    rows = report(tmp_path, sc, "sweep")["result"]["rows"]
    flags = {r["t"]: r["flag"] for r in rows}
    assert flags[-1.5] == "outside-validity"
    assert flags[-0.5] == "ok" and flags[1.0] == "ok"


def test_sweep_chain_reports_coefficients(tmp_path):
    sc = SCENARIOS / "chain_su3.json"
    assert run(tmp_path, "sweep", "--scenario", str(sc)) == EXIT_OK
    coeffs = report(tmp_path, sc, "sweep")["result"]["chain"]["block_coefficients"]
    assert sorted(coeffs) == pytest.approx([1 / 3, 1 / 2, 1.0], abs=1e-12)


def test_schema_errors_exit_2(tmp_path, capsys):
    bad = write(tmp_path, {"backend": {"kind": "group", "algebra": "so3"}, "t_grid": "x"})
    assert run(tmp_path, "sweep", "--scenario", bad) == EXIT_SCHEMA
    assert "t_grid" in capsys.readouterr().err
    assert run(tmp_path, "sweep", "--scenario", str(tmp_path / "missing.json")) == EXIT_SCHEMA
    wrong_task = write(tmp_path, {"task": "scan", "backend": {"kind": "group", "algebra": "so3"}})
    assert run(tmp_path, "sweep", "--scenario", wrong_task) == EXIT_SCHEMA
    unknown = write(tmp_path, {"backend": {"kind": "group", "algebra": "g2"},
                               "planes": [{"V": [1], "W": [0]}]})
    assert run(tmp_path, "sweep", "--scenario", unknown) == EXIT_SCHEMA


def test_validate_rejects_extra_keys():
    with pytest.raises(ScenarioError):
        validate_scenario({"backend": {"kind": "sphere"}, "colour": 1})


def test_verify_passes_and_flip_fails(tmp_path, capsys):
    doc = {"task": "verify", "seed": 3, "backend": {"kind": "group", "algebra": "so3"},
           "verify": {"cases": 4, "fd_cases": 1}}
    sc = write(tmp_path, doc, "v.json")
    assert run(tmp_path, "verify", "--scenario", sc) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS closed_form_vs_milnor" in out and "FAIL" not in out
    assert run(tmp_path, "verify", "--scenario", sc, "--flip-final-sign") == EXIT_VERIFY
    out = capsys.readouterr().out
    assert "FAIL closed_form_at_s1" in out


def test_json_is_byte_identical(tmp_path):
    sc = str(SCENARIOS / "trichotomy_sphere.json")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--scenario", sc, "--out", str(a), "--seed", "9"]) == EXIT_OK
    assert main(["sweep", "--scenario", sc, "--out", str(b), "--seed", "9"]) == EXIT_OK
    name = "trichotomy_sphere.sweep.json"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    assert json.loads((a / name).read_text())["seed"] == 9


def test_csv_round_trips_floats(tmp_path):
    sc = SCENARIOS / "closed_form_full_group.json"
    assert run(tmp_path, "sweep", "--scenario", str(sc), "--format", "csv") == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "closed_form_full_group.sweep.csv").open()))
    js = execute("sweep", json.loads(sc.read_text()))["result"]["rows"]
    assert len(rows) == len(js)
    for r, j in zip(rows, js):
        assert float(r["total"]) == j["total"]
        assert float(r["sec"]) == j["sec"]


def test_zeros_task_reports_fd_confirmation(tmp_path):
    doc = {"task": "zeros", "backend": {"kind": "sphere", "points": [[1, 0, 0, 0, 0, 1]]},
           "t_grid": [1.0], "search": {"multistarts": 8}}
    res = execute("zeros", doc)["result"]["results"][0]
    assert res["count"] == 1
    assert abs(res["records"][0]["fd_sec"]) <= 5e-5


def test_census_requires_sphere():
    doc = {"task": "census", "backend": {"kind": "group", "algebra": "su3", "k": "torus"}}
    with pytest.raises(ScenarioError):
        execute("census", doc)


def test_scan_frontier_berger():
    doc = json.loads((SCENARIOS / "berger_threshold.json").read_text())
    lo, hi = execute("scan", doc)["result"]["frontier"]
    assert hi - lo <= 1e-3
    assert lo - 1e-3 <= 4 / 3 <= hi + 1e-3


def test_scan_frontier_su2():
    doc = json.loads((SCENARIOS / "frontier_su2.json").read_text())
    res = execute("scan", doc)["result"]
    lo, hi = res["frontier"]
    assert lo - 1e-2 <= 1.0 <= hi + 1e-2
    assert {s["s"]: s["negative"] for s in res["scans"]}[1.05]


def test_module_entry_point(tmp_path):
    sc = SCENARIOS / "closed_form_full_group.json"
    proc = subprocess.run([sys.executable, "-m", "cheeger", "sweep", "--scenario", str(sc),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert Path(proc.stdout.strip()).exists()
