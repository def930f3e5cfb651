"""Seeded random machines and loops for differential and property testing."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any

from .loop import LoopGraph, load_loop
from .machine import Processor, load_machine

# name -> (operand count, produces a value)
OPCODES = {"SRC": (0, True), "OP1": (1, True), "OP2": (2, True), "SNK": (1, False)}


@dataclass(frozen=True)
class Shape:
    min_ops: int = 2
    max_ops: int = 5
    max_slots: int = 3
    max_buses: int = 2
    max_write_ports: int = 2
    max_rfs: int = 1
    max_latency: int = 3
    max_distance: int = 2
    recurrence_prob: float = 0.3
    order_dep_prob: float = 0.1
    pin_prob: float = 0.0
    live_out_prob: float = 0.2
    capacity: tuple[int, int] = (2, 8)


SMALL = Shape()
MEDIUM = Shape(min_ops=3, max_ops=12, max_slots=5, max_buses=3, max_write_ports=3, max_rfs=2, pin_prob=0.1)


def random_machine_doc(rng: random.Random, shape: Shape = SMALL) -> dict[str, Any]:
    n_slots = rng.randint(1, shape.max_slots)
    n_rfs = rng.randint(1, min(shape.max_rfs, shape.max_write_ports))
    n_wps = rng.randint(n_rfs, shape.max_write_ports)
    n_buses = rng.randint(1, shape.max_buses)
    slots = [f"S{i}" for i in range(n_slots)]
    rfs = [f"RF{i}" for i in range(n_rfs)]
    buses = [f"b{i}" for i in range(n_buses)]
    # every register file gets at least one write port
    owner = rfs + [rng.choice(rfs) for _ in range(n_wps - n_rfs)]
    wps = [(f"wp{i}", rf) for i, rf in enumerate(owner)]
    latency = {op: rng.randint(1, shape.max_latency) for op in OPCODES}

    legal: dict[str, list[str]] = {s: sorted(rng.sample(list(OPCODES), rng.randint(1, len(OPCODES)))) for s in slots}
    for op in OPCODES:
        if not any(op in ops for ops in legal.values()):
            legal[rng.choice(slots)].append(op)

    slot_docs = []
    ports = []
    for s in slots:
        port = f"{s}.out0"
        produces = any(OPCODES[op][1] for op in legal[s])
        if produces:
            ports.append(port)
        slot_docs.append({
            "id": s,
            "out_ports": [port] if produces else [],
            "opcodes": [
                {"name": op, "latency": latency[op], "out_port": port if OPCODES[op][1] else None,
                 "operand_rfs": [rng.choice(rfs) for _ in range(OPCODES[op][0])]}
                for op in sorted(legal[s])
            ],
        })
    port_bus = sorted({(port, b) for port in ports for b in rng.sample(buses, rng.randint(1, n_buses))})
    bus_wp = {(b, w) for b in buses for w, _ in rng.sample(wps, rng.randint(1, len(wps)))}
    for w, _ in wps:
        if not any(x == w for _, x in bus_wp):
            bus_wp.add((rng.choice(buses), w))
    return {
        "name": "fuzz",
        "slots": slot_docs,
        "buses": buses,
        "register_files": [{"id": rf, "capacity": rng.randint(*shape.capacity),
                            "write_ports": [w for w, r in wps if r == rf]} for rf in rfs],
        "port_bus": [list(e) for e in port_bus],
        "bus_wp": [list(e) for e in sorted(bus_wp)],
    }


def random_loop_doc(rng: random.Random, p: Processor, shape: Shape = SMALL) -> dict[str, Any]:
    """A loop whose data dependences connect every operation to an earlier one."""
    n = rng.randint(shape.min_ops, shape.max_ops)
    ops: list[dict[str, Any]] = []
    deps: list[dict[str, Any]] = []
    regs: list[tuple[str, str]] = []  # (register, defining op)
    for i in range(n):
        oid = f"o{i}"
        if i == 0:
            opcode = rng.choice([op for op, (_, out) in OPCODES.items() if out])
            uses = []
        else:
            opcode = rng.choice([op for op, (k, _) in OPCODES.items() if k > 0])
            k = OPCODES[opcode][0]
            picked = rng.sample(regs, min(len(regs), rng.randint(1, k)))
            uses = [r for r, _ in picked]
            deps += [{"src": src, "dst": oid} for _, src in picked]
        doc: dict[str, Any] = {"id": oid, "opcode": opcode, "defs": [], "uses": uses}
        if OPCODES[opcode][1]:
            doc["defs"] = [f"v{i}"]
            regs.append((f"v{i}", oid))
        if rng.random() < shape.pin_prob:
            doc["pin"] = {"slot": rng.choice([s.id for s in p.slots if opcode in s.legal_opcodes])}
        ops.append(doc)

    # loop-carried recurrences: an op reads a value produced later (or by itself) in a previous iteration
    for j, doc in enumerate(ops):
        spare = OPCODES[doc["opcode"]][0] - len(doc["uses"])
        if spare <= 0 or rng.random() >= shape.recurrence_prob:
            continue
        later = [(r, src) for r, src in regs if int(src[1:]) >= j and r not in doc["uses"]]
        if not later:
            continue
        r, src = rng.choice(later)
        doc["uses"].append(r)
        deps.append({"src": src, "dst": doc["id"], "distance": rng.randint(1, shape.max_distance)})
    if n > 1 and rng.random() < shape.order_dep_prob:
        a, b = sorted(rng.sample(range(n), 2))
        if rng.random() < 0.5:
            deps.append({"src": f"o{a}", "dst": f"o{b}", "latency": rng.randint(0, shape.max_latency),
                         "distance": 0, "kind": "other"})
        else:
            deps.append({"src": f"o{b}", "dst": f"o{a}", "latency": rng.randint(0, shape.max_latency),
                         "distance": rng.randint(1, shape.max_distance), "kind": "other"})
    rf_ids = [rf.id for rf in p.register_files]
    live_out = [{"reg": r, "rfs": [rng.choice(rf_ids)]} for r, _ in regs if rng.random() < shape.live_out_prob]
    return {"ops": ops, "deps": deps, "live_out": live_out}


def random_instance(seed: int, shape: Shape = SMALL) -> tuple[Processor, LoopGraph]:
    rng = random.Random(seed)
    p = load_machine(random_machine_doc(rng, shape))
    return p, load_loop(random_loop_doc(rng, p, shape), p)
