from __future__ import annotations

from hypothesis import given, settings, strategies as st

from modsched import fuzz
from modsched.bounds import mii
from modsched.encoder import encode_core, encode_register_pressure
from modsched.loop import augment_loop_carried, load_loop
from modsched.pressure import live_matrix, measure_pressure, over_capacity, pressure_profile
from modsched.schedule import decode_schedule, load_schedule, sequential
from modsched.solver import solve

from test_schedule import II1


def test_fully_overlapped_g4_keeps_three_values(toy5, g4a):
    s = load_schedule(II1)
    assert pressure_profile(s, g4a, toy5) == {"RF0": [3]}


def test_sequential_g4_profile(toy5, g4a):
    s = sequential(load_schedule(II1))
    assert pressure_profile(s, g4a, toy5)["RF0"] == [1, 2, 2, 1]
    assert measure_pressure(s, g4a, toy5) == {"RF0": 2}


def test_unread_value_is_never_live(toy5):
    g = load_loop({"ops": [{"id": "L", "opcode": "LD", "defs": ["a"], "uses": []}], "deps": []}, toy5)
    s = load_schedule({"ii": 1, "stages": 1, "ops": [{"id": "L", "cycle": 0, "slot": "LSU0"}], "routing": []})
    assert measure_pressure(s, g, toy5) == {"RF0": 0}


def test_live_out_value_stays_live(toy5):
    g = load_loop({"ops": [{"id": "L", "opcode": "LD", "defs": ["a"], "uses": []}], "deps": [],
                   "live_out": [{"reg": "a", "rfs": ["RF0"]}]}, toy5)
    s = load_schedule({"ii": 2, "stages": 1, "ops": [{"id": "L", "cycle": 1, "slot": "LSU0"}], "routing": []})
    assert pressure_profile(s, g, toy5)["RF0"] == [0, 1]


def test_over_capacity_on_small_file():
    from conftest import loop, machine
    p = machine("toy5_rf2")
    g = loop("g4", p, augmented=True)
    s = load_schedule(II1)
    assert over_capacity(s, g, p) == [p.register_files[0].id]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 2))
def test_encoded_liveness_matches_analyzer(seed, extra_ii):
    p, g = fuzz.random_instance(seed, fuzz.SMALL)
    g = augment_loop_carried(g)
    try:
        ii = mii(g, p) + extra_ii
    except Exception:
        return
    rfs = [rf.id for rf in p.register_files]
    pr = encode_register_pressure(encode_core(g, p, ii, 3), g, p, rfs)
    # drop the capacity limits so the comparison is about liveness only
    pr = pr.restricted([lbl for lbl in pr.labels if not lbl.startswith("r7/")])
    out = solve(pr)
    if not out.sat:
        return
    s = decode_schedule(out.model, pr, g, p)
    # compare against the modulo cycles the solver actually chose
    live = live_matrix(s, g, p)
    for (rf, v, c), on in live.items():
        assert out.model[f"live/{rf}/{v}/{c}"] == on, (rf, v, c)
