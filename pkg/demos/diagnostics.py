"""Why a schedule is out of reach: unsat cores turned into findings."""

from dataclasses import replace

from modsched import data
from modsched.explain import explain_core, render
from modsched.loop import Dependency, augment_loop_carried, load_loop
from modsched.machine import load_machine
from modsched.search import SearchOptions, probe
from modsched.solver import minimize_core

opts = SearchOptions(want_core=True)


def why(p, g, ii, stages, **kw):
    res = probe(augment_loop_carried(g), p, ii, stages, replace(opts, **kw))
    if res.status != "unsat":
        print(f"II={ii} stages={stages}: {res.status}")
        return
    core = minimize_core(res.problem, res.core)
    print(render(explain_core(core, res.problem)))
    print()


# three values written per iteration into a register file with a single write port
rf1 = load_machine(data.load("rf1_1port.json"))
why(rf1, load_loop(data.load("triple_write.json"), rf1), 2, 2)

# three stages cannot hold a four-cycle chain at II=1
toy = load_machine(data.load("toy5.json"))
g4 = load_loop(data.load("g4.json"), toy)
why(toy, g4, 1, 3)

# a multiply that feeds itself every iteration
why(toy, replace(g4, deps=g4.deps + (Dependency("MUL", "MUL", 3, 1, "other"),)), 2, 4)

# two registers are not enough when everything overlaps
rf2 = load_machine(data.load("toy5_rf2.json"))
why(rf2, load_loop(data.load("g4.json"), rf2), 1, 4, rp_mode="eager")

# unplug the load/store units from the bus network
doc = data.load("toy5.json")
doc["port_bus"] = [e for e in doc["port_bus"] if not e[0].startswith("LSU")]
cut = load_machine(doc)
why(cut, load_loop(data.load("g4.json"), cut), 4, 1)
