from __future__ import annotations

import json
from dataclasses import replace

import pytest

from modsched import data
from modsched.encoder import encode_core
from modsched.explain import CATEGORIES, Diagnosis, explain_core, render
from modsched.loop import Dependency, augment_loop_carried, load_loop
from modsched.machine import load_machine
from modsched.search import SearchOptions, probe
from modsched.solver import minimize_core

from conftest import loop, machine


def diagnose(p, g, ii, stages, **kw):
    res = probe(augment_loop_carried(g), p, ii, stages, SearchOptions(want_core=True, **kw))
    assert res.status == "unsat"
    return explain_core(minimize_core(res.problem, res.core), res.problem)


def test_single_write_port():
    p = machine("rf1_1port")
    d = diagnose(p, loop("triple_write", p), 2, 2)
    port = [f for f in d.findings if f.category == "port_contention"]
    assert len(port) == 1
    assert port[0].entities["write_ports"] == ["ip0"] and port[0].entities["rf"] == "RF1"
    line = next(x for x in render(d).splitlines() if "[port_contention]" in x)
    assert "RF1" in line and "ip0" in line and "II=2" in line


def test_too_few_stages(toy5, g4):
    d = diagnose(toy5, g4, 1, 3)
    assert "cycle_range" in d.categories
    f = d.findings[d.categories.index("cycle_range")]
    assert f.entities["needed"] == 4 and f.entities["available"] == 3
    assert f.entities["ops"] == ["LD", "ADD", "MUL", "ST"]


def test_one_load_store_unit():
    p = machine("toy_1lsu")
    d = diagnose(p, loop("g4", p), 1, 4)
    assert d.categories == ["slot_contention"]
    assert d.findings[0].entities["slots"] == ["LSU0"]
    assert d.findings[0].entities["ops"] == ["LD", "ST"]


def test_recurrence(toy5, g4):
    g = replace(g4, deps=g4.deps + (Dependency("MUL", "MUL", 3, 1, "other"),))
    d = diagnose(toy5, g, 2, 4)
    assert d.categories[0] == "dependency_cycle"
    assert d.findings[0].entities == {"ops": ["MUL"], "latency": 3, "distance": 1}
    assert "needs II >= 3" in d.findings[0].message


def test_register_file_too_small():
    p = machine("toy5_rf2")
    d = diagnose(p, loop("g4", p), 1, 4, rp_mode="eager")
    assert d.categories == ["register_pressure"]
    assert d.findings[0].entities["registers"] == ["a", "b", "c"]
    assert d.findings[0].entities["capacity"] == 2


def test_missing_bus_path():
    doc = data.load("toy5.json")
    doc["port_bus"] = [e for e in doc["port_bus"] if not e[0].startswith("LSU")]
    p = load_machine(doc)
    d = diagnose(p, loop("g4", p), 4, 1)
    assert d.categories == ["routing_gap"]
    assert d.findings[0].entities["paths"] == [["LSU0.out0", "RF0"], ["LSU1.out0", "RF0"]]


def test_every_core_label_is_accounted_for():
    p = machine("rf1_1port")
    d = diagnose(p, loop("triple_write", p), 2, 2)
    assert sorted(lbl for f in d.findings for lbl in f.labels) == sorted(d.core)
    assert set(d.categories) <= set(CATEGORIES)


def test_lone_pin_is_residual(toy5):
    g = load_loop({"ops": [{"id": "L", "opcode": "LD", "defs": ["a"], "uses": [], "pin": {"slot": "LSU0"}}],
                   "deps": []}, toy5)
    pr = encode_core(g, toy5, 1, 1)
    d = explain_core(["pin/op=L/slot=LSU0"], pr)
    assert d.categories == ["residual"]
    assert "pinned to slot LSU0" in d.findings[0].message


def test_empty_core(toy5, g4a):
    with pytest.raises(ValueError):
        explain_core([], encode_core(g4a, toy5, 1, 3))


def test_json_round_trip():
    p = machine("rf1_1port")
    d = diagnose(p, loop("triple_write", p), 2, 2)
    text = render(d, "json")
    back = Diagnosis.from_doc(json.loads(text))
    assert back == d and render(back, "json") == text
    with pytest.raises(ValueError):
        render(d, "xml")


def test_deterministic():
    p = machine("rf1_1port")
    runs = [render(diagnose(p, loop("triple_write", p), 2, 2), "json") for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]
