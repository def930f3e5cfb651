"""End-to-end acceptance checks, one test per criterion.

Each test appends a PASS/FAIL line that is echoed in the terminal summary.
Tolerances are pinned below.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import replace

import pytest

from modsched import fuzz
from modsched.baseline import ims_schedule
from modsched.bounds import mii, stage_bounds
from modsched.cli import main
from modsched.encoder import encode_core, encode_register_pressure
from modsched.errors import InfeasibleError
from modsched.loop import augment_loop_carried
from modsched.oracle import brute_force_min_ii
from modsched.pressure import live_matrix, measure_pressure
from modsched.schedule import check_schedule, decode_schedule, replay
from modsched.search import SearchOptions, find_schedule
from modsched.solver import Budget, open_session, solve, solve_incremental

from conftest import ACCEPTANCE, loop, machine

RUNNING_EXAMPLE_SECONDS = 5.0
MIN_SPEEDUP = 3.9
ORACLE_INSTANCES = 200
ORACLE_SECONDS = 600.0
SOUNDNESS_INSTANCES = 1000
SOUNDNESS_BUDGET = Budget(resource_limit=500_000)
SOUNDNESS_II_SLACK = 4  # search II in mii..mii+4
RP_INSTANCES = 100
ENCODING_PROBES = 50
INCREMENTAL_INSTANCES = 20

UP_TO_12 = replace(fuzz.MEDIUM, min_ops=1, max_ops=12)
TIGHT_RF = replace(fuzz.SMALL, capacity=(1, 3), live_out_prob=0.3)


def record(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def _cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_1_running_example(capsys):
    t0 = time.perf_counter()
    code, out = _cli(capsys, "schedule", "-m", "toy5.json", "-l", "g4.json", "--format", "json")
    doc = json.loads(out)
    _, seq = _cli(capsys, "simulate", "-m", "toy5.json", "-l", "g4.json", "--trip-count", "1024", "--sequential")
    _, pipe = _cli(capsys, "simulate", "-m", "toy5.json", "-l", "g4.json", "--trip-count", "1024")
    elapsed = time.perf_counter() - t0
    seq, pipe = int(seq), int(pipe)
    speedup = seq / pipe
    ok = (code == 0 and (doc["ii"], doc["stages"]) == (1, 4) and seq == 4096 and pipe == 1027
          and speedup >= MIN_SPEEDUP and elapsed < RUNNING_EXAMPLE_SECONDS)
    record(1, ok, f"II={doc['ii']} stages={doc['stages']}, sequential {seq}, pipelined {pipe}, "
                  f"speedup {speedup:.3f}, {elapsed:.2f}s")
    assert ok


def test_2_optimal_against_oracle():
    t0 = time.perf_counter()
    mismatches = []
    for seed in range(ORACLE_INSTANCES):
        p, g = fuzz.random_instance(seed, fuzz.SMALL)
        r = find_schedule(g, p, SearchOptions(rp_mode="off"))
        want = brute_force_min_ii(augment_loop_carried(g), p)
        if r.ii != want or (r.found and not r.proven_minimal):
            mismatches.append((seed, r.ii, want))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < ORACLE_SECONDS
    record(2, ok, f"{ORACLE_INSTANCES} instances, {len(mismatches)} II mismatches {mismatches[:3]}, {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def soundness_runs():
    """Search every fuzzed instance once; criteria 3 and 4 both read the results."""
    runs = []
    for seed in range(SOUNDNESS_INSTANCES):
        p, g = fuzz.random_instance(100_000 + seed, UP_TO_12)
        ga = augment_loop_carried(g)
        try:
            lower = mii(ga, p)
        except InfeasibleError:
            runs.append((p, ga, None))
            continue
        opts = SearchOptions(max_ii=lower + SOUNDNESS_II_SLACK, budget=SOUNDNESS_BUDGET)
        runs.append((p, ga, find_schedule(g, p, opts)))
    return runs


def test_3_soundness(soundness_runs):
    found = bad = conflicts = 0
    for p, ga, r in soundness_runs:
        if r is None or not r.found:
            continue
        found += 1
        s = r.schedule
        bad += bool(check_schedule(s, ga, p))
        conflicts += bool(replay(s, s.num_stages + 3, ga))
    ok = len(soundness_runs) >= SOUNDNESS_INSTANCES and found > 0 and bad == 0 and conflicts == 0
    record(3, ok, f"{len(soundness_runs)} instances, {found} schedules emitted, "
                  f"{bad} with checker violations, {conflicts} with replay conflicts")
    assert ok


def test_4_stage_bounds(soundness_runs, toy5, g4a):
    found = outside = 0
    for _p, ga, r in soundness_runs:
        if r is None or not r.found:
            continue
        found += 1
        sb = stage_bounds(ga, r.ii)
        outside += not sb.min_stages <= r.schedule.num_stages <= sb.max_stages
    literal = find_schedule(g4a, toy5, SearchOptions(stages=3, max_ii=1))
    corrected = find_schedule(g4a, toy5, SearchOptions(stages=4, max_ii=1))
    regression = literal.status == "infeasible" and corrected.found and corrected.ii == 1
    ok = found > 0 and outside == 0 and regression
    record(4, ok, f"{found} found schedules, {outside} outside [min_stages, max_stages]; "
                  f"G4 at II=1: 3 stages {literal.status}, 4 stages {corrected.status}")
    assert ok


def test_5_register_pressure():
    p = machine("toy5_rf2")
    r = find_schedule(loop("g4", p), p, SearchOptions(rp_mode="lazy"))
    peak = measure_pressure(r.schedule, loop("g4", p, True), p)["RF0"]
    g4_ok = r.found and peak <= 2

    compared = disagreements = ii_mismatch = 0
    seed = 0
    while compared < RP_INSTANCES:
        p, g = fuzz.random_instance(200_000 + seed, TIGHT_RF)
        seed += 1
        ga = augment_loop_carried(g)
        lazy = find_schedule(g, p, SearchOptions(rp_mode="lazy"))
        eager = find_schedule(g, p, SearchOptions(rp_mode="eager"))
        ii_mismatch += lazy.ii != eager.ii
        if not lazy.found:
            continue
        s = lazy.schedule
        pr = encode_register_pressure(encode_core(ga, p, s.ii, s.num_stages), ga, p,
                                      [rf.id for rf in p.register_files])
        out = solve(pr)
        if not out.sat:
            disagreements += 1  # the search found a schedule that fits, so this must be sat
            continue
        model_schedule = decode_schedule(out.model, pr, ga, p)
        live = live_matrix(model_schedule, ga, p)
        compared += 1
        disagreements += any(out.model[f"live/{rf}/{v}/{c}"] != on for (rf, v, c), on in live.items())
    ok = g4_ok and disagreements == 0 and ii_mismatch == 0
    record(5, ok, f"G4 with RF0 capacity 2: II={r.ii} pressure {peak}; {compared} RP models compared, "
                  f"{disagreements} Live disagreements, {ii_mismatch} lazy/eager II mismatches over {seed} instances")
    assert ok


def test_6_write_port_diagnosis(capsys):
    outs = []
    codes = []
    for _ in range(3):
        code, out = _cli(capsys, "explain", "-m", "rf1_1port.json", "-l", "triple_write.json", "--ii", "2",
                         "--format", "json")
        codes.append(code)
        outs.append(out)
    findings = json.loads(outs[0])["findings"]
    named = [f for f in findings if f["category"] == "port_contention" and "ip0" in f["entities"]["write_ports"]]
    ok = codes == [1, 1, 1] and bool(named) and outs[0] == outs[1] == outs[2]
    record(6, ok, f"exit codes {codes}, port_contention naming ip0: {bool(named)}, "
                  f"identical output across runs: {outs[0] == outs[1] == outs[2]}")
    assert ok


def test_7_heuristic_never_beats_exact():
    compared = worse = better = 0
    for seed in range(ORACLE_INSTANCES):
        p, g = fuzz.random_instance(seed, fuzz.SMALL)
        exact = find_schedule(g, p, SearchOptions(rp_mode="off"))
        h = ims_schedule(g, p)
        if h.schedule is None or not exact.found:
            continue
        compared += 1
        better += h.achieved_ii < exact.ii
        worse += h.achieved_ii > exact.ii
    p = machine("ims_gap_machine")
    g = loop("ims_gap_loop", p)
    gap = (ims_schedule(g, p).achieved_ii, find_schedule(g, p, SearchOptions(rp_mode="off")).ii)
    ok = compared > 0 and better == 0 and gap[0] > gap[1]
    record(7, ok, f"{compared} fuzzed instances, heuristic below optimum {better} times, above {worse} times; "
                  f"fixture heuristic II={gap[0]} vs optimal II={gap[1]}")
    assert ok


def test_8_encoding_equivalence():
    rng = random.Random(8)
    probes = differ = 0
    seed = 0
    while probes < ENCODING_PROBES:
        p, g = fuzz.random_instance(300_000 + seed, fuzz.SMALL)
        seed += 1
        ga = augment_loop_carried(g)
        ii, stages = rng.randint(1, 4), rng.randint(1, 3)
        statuses = {solve(encode_core(ga, p, ii, stages, enc)).status for enc in ("compact", "paper")}
        probes += 1
        differ += len(statuses) > 1

    rp_runs = rp_differ = 0
    seed = 0
    while rp_runs < INCREMENTAL_INSTANCES:
        p, g = fuzz.random_instance(400_000 + seed, TIGHT_RF)
        seed += 1
        ga = augment_loop_carried(g)
        try:
            ii = mii(ga, p)
        except InfeasibleError:
            continue
        base = encode_core(ga, p, ii, 3)
        full = encode_register_pressure(base, ga, p, [rf.id for rf in p.register_files])
        tracked = open_session(base)
        try:
            first = solve_incremental(tracked, [], declarations=None)
            inc = solve_incremental(tracked, full.constraints[len(base.constraints):], declarations=full)
        finally:
            tracked.session.close()
        rp_runs += 1
        rp_differ += inc.status != solve(full).status or first.status != solve(base).status
    ok = differ == 0 and rp_differ == 0
    record(8, ok, f"{probes} compact/paper probes with {differ} status differences; "
                  f"{rp_runs} incremental/from-scratch RP instances with {rp_differ} differences")
    assert ok
