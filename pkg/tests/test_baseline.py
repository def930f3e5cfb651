from __future__ import annotations

from dataclasses import replace

import pytest

from modsched import fuzz
from modsched.baseline import HeuristicOptions, ims_schedule
from modsched.loop import Dependency, augment_loop_carried
from modsched.schedule import check_schedule, replay
from modsched.search import SearchOptions, find_schedule

from conftest import loop, machine


def test_g4_reaches_ii1(toy5, g4, g4a):
    res = ims_schedule(g4, toy5)
    assert res.achieved_ii == 1 and res.attempts >= 4
    assert check_schedule(res.schedule, g4a, toy5) == []


def test_gap_fixture_is_strictly_worse():
    p = machine("ims_gap_machine")
    g = loop("ims_gap_loop", p)
    assert find_schedule(g, p, SearchOptions(rp_mode="off")).ii == 4
    res = ims_schedule(g, p)
    assert res.achieved_ii == 5
    assert check_schedule(res.schedule, augment_loop_carried(g), p) == []


def test_zero_distance_cycle_has_no_schedule(toy5, g4):
    g = replace(g4, deps=g4.deps + (Dependency("ST", "LD", 1, 0, "other"),))
    res = ims_schedule(g, toy5)
    assert res.schedule is None and res.achieved_ii is None


def test_ii_cap(toy5):
    p = machine("toy_1lsu")
    assert ims_schedule(loop("g4", p), p, HeuristicOptions(max_ii=1)).schedule is None


def test_writeback_offset(toy5, g4, g4a):
    res = ims_schedule(g4, toy5, HeuristicOptions(writeback_offset="latency"))
    assert check_schedule(res.schedule, g4a, toy5) == []


@pytest.mark.parametrize("seed", range(40))
def test_never_beats_the_exact_search(seed):
    p, g = fuzz.random_instance(seed)
    exact = find_schedule(g, p, SearchOptions(rp_mode="off"))
    res = ims_schedule(g, p)
    if res.schedule is None:
        return
    ga = augment_loop_carried(g)
    assert check_schedule(res.schedule, ga, p) == []
    assert replay(res.schedule, res.schedule.num_stages + 2, ga) == []
    assert exact.found and res.achieved_ii >= exact.ii
