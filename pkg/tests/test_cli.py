from __future__ import annotations

import json
import subprocess
import sys

import pytest

from modsched import data
from modsched.cli import main

TOY = ["-m", "toy5.json", "-l", "g4.json"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_schedule_json(capsys, tmp_path):
    dest = tmp_path / "s.json"
    code, out, _ = run(capsys, "schedule", *TOY, "--format", "json", "-o", str(dest))
    assert code == 0
    doc = json.loads(out)
    assert (doc["ii"], doc["stages"], doc["mii"], doc["proven_minimal"]) == (1, 4, 1, True)
    assert json.loads(dest.read_text()) == doc["schedule"]
    code, out, _ = run(capsys, "check", *TOY, "-s", str(dest))
    assert (code, out.strip()) == (0, "legal")


def test_schedule_table_and_trace(capsys):
    code, out, err = run(capsys, "schedule", *TOY, "--trace")
    assert code == 0
    assert "II=1 stages=4 (kernel)" in out
    probes = [json.loads(line) for line in err.splitlines()]
    assert probes[-1]["status"] == "sat" and probes[-1]["ii"] == 1


def test_running_example_cycle_counts(capsys):
    assert run(capsys, "simulate", *TOY, "--trip-count", "1024")[:2] == (0, "1027\n")
    assert run(capsys, "simulate", *TOY, "--trip-count", "1024", "--sequential")[:2] == (0, "4096\n")
    # the loop file carries its own trip count
    code, out, _ = run(capsys, "simulate", *TOY, "--format", "json")
    assert json.loads(out)["cycles"] == 1027


def test_simulate_needs_enough_iterations(capsys):
    assert run(capsys, "simulate", *TOY, "--trip-count", "2")[0] == 2


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", *TOY, "--format", "json", "--max-ii", "2")
    doc = json.loads(out)
    assert code == 0 and doc["mii"] == 1
    assert [(r["ii"], r["min_stages"], r["max_stages"]) for r in doc["stage_bounds"]] == [(1, 4, 4), (2, 2, 4)]


def test_baseline(capsys):
    code, out, _ = run(capsys, "baseline", "-m", "ims_gap_machine.json", "-l", "ims_gap_loop.json",
                       "--format", "json")
    assert code == 0 and json.loads(out)["ii"] == 5


def test_explain_write_port(capsys):
    outs = []
    for _ in range(3):
        code, out, _ = run(capsys, "explain", "-m", "rf1_1port.json", "-l", "triple_write.json", "--ii", "2",
                           "--format", "json")
        assert code == 1
        outs.append(out)
    assert outs[0] == outs[1] == outs[2]
    findings = json.loads(outs[0])["findings"]
    assert any(f["category"] == "port_contention" and "ip0" in f["entities"]["write_ports"] for f in findings)


def test_explain_without_ii(capsys):
    p = ["-m", "toy_1lsu.json", "-l", "g4.json"]
    code, out, _ = run(capsys, "explain", *p, "--minimize-core")
    assert code == 1
    assert "infeasible at II=1" in out and "[slot_contention]" in out
    code, _, err = run(capsys, "explain", *TOY)
    assert code == 0 and "reaches II=1" in err


def test_explain_feasible_ii(capsys):
    code, _, err = run(capsys, "explain", *TOY, "--ii", "1")
    assert code == 0 and "feasible at II=1" in err


def test_export_smt(capsys):
    code, out, _ = run(capsys, "export-smt", *TOY, "--ii", "1", "--stages", "3")
    assert code == 0
    assert out.startswith("; modulo scheduling problem: ii=1 stages=3")
    assert "(check-sat)" in out and ":named c4/src=LD/dst=ADD/l=1/d=0" in out
    _, paper, _ = run(capsys, "export-smt", *TOY, "--ii", "1", "--stages", "3", "--encoding", "paper")
    assert paper != out


def test_infeasible_and_budget_exit_codes(capsys, tmp_path):
    loop = data.load("g4.json")
    loop["deps"].append({"src": "ST", "dst": "LD", "latency": 1, "distance": 0, "kind": "other"})
    path = tmp_path / "cyclic.json"
    path.write_text(json.dumps(loop))
    assert run(capsys, "schedule", "-m", "toy5.json", "-l", str(path))[0] == 1
    assert run(capsys, "schedule", *TOY, "--resource-limit", "1", "--max-ii", "1")[0] == 3


@pytest.mark.parametrize("argv", [
    ["schedule", "-m", "missing.json", "-l", "g4.json"],
    ["schedule", *TOY, "--max-ii", "0"],
    ["schedule", *TOY, "--rp-mode", "sometimes"],
    ["frobnicate"],
    ["export-smt", *TOY],
])
def test_input_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_bad_json(capsys, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{")
    code, _, err = run(capsys, "schedule", "-m", str(path), "-l", "g4.json")
    assert code == 2 and "invalid JSON" in err


def test_check_reports_violations(capsys, tmp_path):
    code, out, _ = run(capsys, "schedule", *TOY, "--format", "json")
    doc = json.loads(out)["schedule"]
    doc["ops"][1]["cycle"] = 0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "check", *TOY, "-s", str(path))
    assert code == 1 and "[dependency]" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "modsched", "schedule", *TOY, "--format", "json"],
                         capture_output=True, text=True, timeout=60)
    assert res.returncode == 0 and json.loads(res.stdout)["ii"] == 1
