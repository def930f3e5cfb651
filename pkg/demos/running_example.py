"""Pipeline the four-operation loop on the five-slot toy machine and look at the result."""

from modsched import data
from modsched.loop import load_loop
from modsched.machine import load_machine
from modsched.pressure import pressure_profile
from modsched.schedule import expand_pipeline, render_table, sequential, simulate
from modsched.search import find_schedule

p = load_machine(data.load("toy5.json"))
g = load_loop(data.load("g4.json"), p)

report = find_schedule(g, p)
s = report.schedule
print(report.reason)
print(render_table(s, p))
print()
print(render_table(s, p, kernel=True))

# one new iteration starts every cycle, so 1024 iterations finish after 1023 + 4 cycles
pipelined = simulate(s, 1024)
back_to_back = simulate(sequential(s), 1024)
print(f"\n1024 iterations: {pipelined} cycles pipelined, {back_to_back} sequential "
      f"({back_to_back / pipelined:.2f}x)")

# prolog fills the pipe, the kernel repeats, the epilog drains it
code = expand_pipeline(s, 1024)
for name, bundles in (("prolog", code.prolog), ("kernel", code.kernel), ("epilog", code.epilog)):
    for b in bundles:
        print(f"{name:7}", "  ".join(f"{slot}:{op}[{st}]" for slot, (op, st) in sorted(b.items())))

print("\nlive registers per kernel cycle:", pressure_profile(s, g, p))

for trace in report.trace:
    print(trace.to_doc())
