from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from modsched.errors import InputError
from modsched.schedule import (ModuloSchedule, Placement, Route, SimulationConflict, check_schedule,
                               expand_pipeline, flatten, load_schedule, overlapped, render_table, replay,
                               schedule_to_doc, sequential, simulate)

II1 = {
    "ii": 1, "stages": 4,
    "ops": [{"id": "LD", "cycle": 0, "slot": "LSU0"}, {"id": "ADD", "cycle": 1, "slot": "ARU1"},
            {"id": "MUL", "cycle": 2, "slot": "ARU0"}, {"id": "ST", "cycle": 3, "slot": "LSU1"}],
    "routing": [
        {"producer": "LD", "cycle": 0, "out_port": "LSU0.out0", "bus": "b2", "write_port": "wp1", "rf": "RF0"},
        {"producer": "ADD", "cycle": 1, "out_port": "ARU1.out0", "bus": "b0", "write_port": "wp2", "rf": "RF0"},
        {"producer": "MUL", "cycle": 2, "out_port": "ARU0.out0", "bus": "b1", "write_port": "wp0", "rf": "RF0"},
    ],
}

II2 = {
    "ii": 2, "stages": 2,
    "ops": [{"id": "LD", "cycle": 0, "slot": "LSU0"}, {"id": "ADD", "cycle": 1, "slot": "ARU0"},
            {"id": "MUL", "cycle": 2, "slot": "ARU0"}, {"id": "ST", "cycle": 3, "slot": "LSU0"}],
    "routing": [
        {"producer": "LD", "cycle": 0, "out_port": "LSU0.out0", "bus": "b0", "write_port": "wp0", "rf": "RF0"},
        {"producer": "ADD", "cycle": 1, "out_port": "ARU0.out0", "bus": "b0", "write_port": "wp0", "rf": "RF0"},
        {"producer": "MUL", "cycle": 2, "out_port": "ARU0.out0", "bus": "b1", "write_port": "wp1", "rf": "RF0"},
    ],
}


def kinds(vs):
    return sorted({v.kind for v in vs})


@pytest.mark.parametrize("doc", [II1, II2])
def test_reference_schedules_are_legal(toy5, g4a, doc):
    s = load_schedule(doc)
    assert check_schedule(s, g4a, toy5) == []
    assert replay(s, 8, g4a) == []


def test_kernel_of_ii1_is_one_bundle_with_all_stages():
    code = expand_pipeline(load_schedule(II1))
    assert len(code.kernel) == 1
    assert sorted(stage for _op, stage in code.kernel[0].values()) == [0, 1, 2, 3]
    assert len(code.prolog) == len(code.epilog) == 3
    assert code.prolog[0] == {"LSU0": ("LD", 0)}
    assert code.epilog[-1] == {"LSU1": ("ST", 3)}


def test_ii2_prolog_kernel_epilog():
    code = expand_pipeline(load_schedule(II2))
    assert code.kernel == [{"LSU0": ("LD", 0), "ARU0": ("MUL", 1)}, {"ARU0": ("ADD", 0), "LSU0": ("ST", 1)}]
    assert code.prolog == [{"LSU0": ("LD", 0)}, {"ARU0": ("ADD", 0)}]
    assert code.epilog == [{"ARU0": ("MUL", 1)}, {"LSU0": ("ST", 1)}]


def test_expansion_needs_enough_iterations():
    with pytest.raises(ValueError):
        expand_pipeline(load_schedule(II1), trip_count=3)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([II1, II2]), st.integers(4, 40))
def test_generated_code_matches_overlapped_execution(doc, trip):
    s = load_schedule(doc)
    assert flatten(expand_pipeline(s, trip), s, trip) == overlapped(s, trip)


def test_dependency_violation_is_reported(toy5, g4a):
    s = load_schedule(II1)
    placement = dict(s.placement, ADD=Placement(0, "ARU1"))
    routing = tuple(r if r.producer != "ADD" else Route("ADD", 0, r.out_port, r.bus, r.write_port, r.rf)
                    for r in s.routing)
    bad = check_schedule(ModuloSchedule(1, 4, placement, routing), g4a, toy5)
    assert kinds(bad) == ["dependency"]
    assert any("LD->ADD" in v.message for v in bad)


def test_slot_collision_is_reported(toy5, g4a):
    s = load_schedule(II1)
    placement = dict(s.placement, ST=Placement(3, "LSU0"))
    bad = check_schedule(ModuloSchedule(1, 4, placement, s.routing), g4a, toy5)
    assert kinds(bad) == ["slot_conflict"]
    assert "LSU0" in bad[0].message
    with pytest.raises(SimulationConflict):
        simulate(ModuloSchedule(1, 4, placement, s.routing), 10)


def test_bus_and_missing_route_problems(toy5, g4a):
    s = load_schedule(II1)
    clash = tuple(Route(r.producer, r.cycle, r.out_port, "b0", r.write_port, r.rf) for r in s.routing)
    assert "bus_conflict" in kinds(check_schedule(ModuloSchedule(1, 4, s.placement, clash), g4a, toy5))
    assert kinds(check_schedule(ModuloSchedule(1, 4, s.placement, s.routing[1:]), g4a, toy5)) == ["missing_route"]


def test_wrong_stage_count_and_range(toy5, g4a):
    s = load_schedule(II1)
    assert kinds(check_schedule(ModuloSchedule(1, 5, s.placement, s.routing), g4a, toy5)) == ["stages"]
    assert kinds(check_schedule(ModuloSchedule(1, 3, s.placement, s.routing), g4a, toy5)) == ["cycle_range"]


def test_cycle_counts():
    s = load_schedule(II1)
    assert simulate(s, 1024) == 1027
    assert simulate(sequential(s), 1024) == 4096
    assert simulate(s, 4) == 3 + s.span == 7
    # the generated code runs exactly that long
    assert flatten(expand_pipeline(s, 4), s, 4)[-1][0] + 1 == 7
    with pytest.raises(ValueError):
        simulate(s, 3)


def test_sequential_keeps_placement():
    s = sequential(load_schedule(II2))
    assert (s.ii, s.num_stages) == (4, 1)


def test_normalized_shifts_by_whole_stages():
    s = load_schedule(II2)
    moved = ModuloSchedule(2, 3, {k: Placement(v.cycle + 2, v.slot) for k, v in s.placement.items()},
                           tuple(Route(r.producer, r.cycle + 2, r.out_port, r.bus, r.write_port, r.rf) for r in s.routing))
    assert moved.normalized() == s


def test_json_round_trip():
    for doc in (II1, II2):
        s = load_schedule(doc)
        assert load_schedule(schedule_to_doc(s)) == s
        assert schedule_to_doc(s) == doc


def test_bad_documents():
    with pytest.raises(InputError):
        load_schedule({"ii": 0, "stages": 1, "ops": [], "routing": []})
    with pytest.raises(InputError):
        load_schedule({**II1, "ops": II1["ops"] + [II1["ops"][0]]})


def test_render_table(toy5):
    s = load_schedule(II2)
    full = render_table(s, toy5).splitlines()
    assert full[0] == "II=2 stages=2" and len(full) == 2 + s.span
    kernel = render_table(s, toy5, kernel=True)
    assert "MUL[1]" in kernel and "LD[0]" in kernel
