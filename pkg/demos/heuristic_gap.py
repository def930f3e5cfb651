"""Exact search against the greedy modulo scheduler on random loops."""

import collections

import numpy as np

from modsched import data, fuzz
from modsched.baseline import ims_schedule
from modsched.loop import load_loop
from modsched.machine import load_machine
from modsched.schedule import render_table
from modsched.search import SearchOptions, find_schedule

gaps = []
for seed in range(300):
    p, g = fuzz.random_instance(seed)
    exact = find_schedule(g, p, SearchOptions(rp_mode="off"))
    greedy = ims_schedule(g, p)
    if exact.found and greedy.schedule is not None:
        gaps.append(greedy.achieved_ii - exact.ii)

gaps = np.array(gaps)
print(f"{len(gaps)} loops, greedy matches the optimum on {np.mean(gaps == 0):.1%}")
print("II gap histogram:", dict(sorted(collections.Counter(gaps.tolist()).items())))

# the committed fixture where the greedy order paints itself into a corner
p = load_machine(data.load("ims_gap_machine.json"))
g = load_loop(data.load("ims_gap_loop.json"), p)
best = find_schedule(g, p, SearchOptions(rp_mode="off")).schedule
greedy = ims_schedule(g, p).schedule
print(render_table(best, p, kernel=True))
print(render_table(greedy, p, kernel=True))
