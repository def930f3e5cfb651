"""Modulo schedules: decoding, pipeline expansion, legality checking and simulation."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema

from .encoder import Problem, read_rfs, route_offset
from .errors import InputError
from .loop import LoopGraph
from .machine import Processor, _schema_path, routing_options, slots_for

SCHEDULE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["ii", "stages", "ops", "routing"],
    "properties": {
        "ii": {"type": "integer", "minimum": 1},
        "stages": {"type": "integer", "minimum": 1},
        "writeback_offset": {"enum": ["0", "latency"]},
        "ops": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "cycle", "slot"],
                "properties": {
                    "id": {"type": "string"},
                    "cycle": {"type": "integer", "minimum": 0},
                    "slot": {"type": "string"},
                },
            },
        },
        "routing": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["producer", "cycle", "out_port", "bus", "write_port", "rf"],
                "properties": {
                    "producer": {"type": "string"},
                    "cycle": {"type": "integer", "minimum": 0},
                    "out_port": {"type": "string"},
                    "bus": {"type": "string"},
                    "write_port": {"type": "string"},
                    "rf": {"type": "string"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Placement:
    cycle: int
    slot: str


@dataclass(frozen=True)
class Route:
    """A value of ``producer`` travelling port -> bus -> write port at ``cycle``."""

    producer: str
    cycle: int
    out_port: str
    bus: str
    write_port: str
    rf: str


@dataclass(frozen=True)
class ModuloSchedule:
    ii: int
    num_stages: int
    placement: dict[str, Placement] = field(hash=False)
    routing: tuple[Route, ...] = ()
    writeback_offset: str = "0"

    @property
    def span(self) -> int:
        return max(pl.cycle for pl in self.placement.values()) + 1

    def stage(self, op: str) -> int:
        return self.placement[op].cycle // self.ii

    def normalized(self, shift: bool = True) -> ModuloSchedule:
        """Shift down by whole IIs so an op issues in stage 0, then recompute the stage count."""
        k = min(pl.cycle for pl in self.placement.values()) // self.ii if shift else 0
        delta = k * self.ii
        placement = {op: Placement(pl.cycle - delta, pl.slot) for op, pl in self.placement.items()}
        routing = tuple(replace(r, cycle=r.cycle - delta) for r in self.routing)
        span = max(pl.cycle for pl in placement.values()) + 1
        return replace(self, placement=placement, routing=routing, num_stages=math.ceil(span / self.ii))


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


Bundle = dict[str, tuple[str, int]]  # slot -> (op, stage)


@dataclass
class PipelineCode:
    ii: int
    num_stages: int
    prolog: list[Bundle]
    kernel: list[Bundle]
    epilog: list[Bundle]


class SimulationConflict(RuntimeError):
    def __init__(self, conflicts: list[str]):
        self.conflicts = conflicts
        super().__init__(f"{len(conflicts)} conflicts during replay, first: {conflicts[0]}")


# -- decoding -------------------------------------------------------------------


def decode_schedule(model: dict, pr: Problem, g: LoopGraph, p: Processor) -> ModuloSchedule:
    """Read placements and routes out of a satisfying assignment."""
    placement = {}
    for o in g.operations:
        cycle = model[pr.cycle(o.id).args[0]]
        chosen = [s for s in slots_for(p, o.opcode) if model[pr.slot(o.id, s).args[0]]]
        if len(chosen) != 1:
            raise ValueError(f"model places {o.id} on {len(chosen)} slots")
        placement[o.id] = Placement(cycle, chosen[0])

    routes: dict[tuple[str, str], Route] = {}
    for d in g.data_deps():
        reg = g.dep_register(d)
        src, dst = g.op(d.src), g.op(d.dst)
        port = p.out_port(src.opcode, placement[src.id].slot)
        at = placement[src.id].cycle + route_offset(p, src, pr.writeback_offset)
        index = at % pr.ii if pr.encoding == "compact" else at
        for rf in read_rfs(p, dst, placement[dst.id].slot, reg):
            if (src.id, rf) in routes:
                continue
            for bus, wp in routing_options(p, port, rf):
                if model[f"cpb/{index}/{port}/{bus}"] and model[f"cbw/{index}/{bus}/{wp}"]:
                    routes[(src.id, rf)] = Route(src.id, at, port, bus, wp, rf)
                    break
            else:
                raise ValueError(f"model has no route for {src.id} -> {rf}")
    s = ModuloSchedule(pr.ii, pr.num_stages, placement, tuple(sorted(routes.values(), key=_route_key)),
                       pr.writeback_offset)
    pinned = any(o.pinned_cycle is not None for o in g.operations)
    return s.normalized(shift=not pinned)


def _route_key(r: Route) -> tuple:
    return (r.cycle, r.producer, r.rf)


def sequential(s: ModuloSchedule) -> ModuloSchedule:
    """The same single-iteration schedule run without overlap (II = span)."""
    return replace(s, ii=s.span, num_stages=1)


# -- checking ----------------------------------------------------------------------


def check_schedule(s: ModuloSchedule, g: LoopGraph, p: Processor) -> list[Violation]:
    """Independent legality check of a modulo schedule; empty iff legal."""
    out: list[Violation] = []
    ii = s.ii
    ids = set(g.op_ids)
    for op in s.placement:
        if op not in ids:
            out.append(Violation("unknown_op", f"schedule places unknown operation {op}"))
    for o in g.operations:
        pl = s.placement.get(o.id)
        if pl is None:
            out.append(Violation("unplaced", f"{o.id} is not placed"))
            continue
        if pl.slot not in slots_for(p, o.opcode):
            out.append(Violation("illegal_slot", f"{o.id} ({o.opcode}) cannot issue on {pl.slot}"))
        if not 0 <= pl.cycle <= ii * s.num_stages - 1:
            out.append(Violation("cycle_range", f"{o.id} at cycle {pl.cycle} outside 0..{ii * s.num_stages - 1}"))
        if o.pinned_slot is not None and pl.slot != o.pinned_slot:
            out.append(Violation("pin", f"{o.id} pinned to {o.pinned_slot} but placed on {pl.slot}"))
        if o.pinned_cycle is not None and pl.cycle != o.pinned_cycle:
            out.append(Violation("pin", f"{o.id} pinned to cycle {o.pinned_cycle} but placed at {pl.cycle}"))
    if out:
        return out
    if s.num_stages != math.ceil(s.span / ii):
        out.append(Violation("stages", f"stage count {s.num_stages} != ceil({s.span}/{ii})"))

    # (i) one op per slot per modulo cycle
    busy: dict[tuple[str, int], str] = {}
    for o in g.operations:
        pl = s.placement[o.id]
        key = (pl.slot, pl.cycle % ii)
        if key in busy:
            out.append(Violation("slot_conflict",
                                 f"{busy[key]} and {o.id} both use {pl.slot} at modulo cycle {key[1]}"))
        else:
            busy[key] = o.id

    # (ii) dependencies
    for d in g.deps:
        c1, c2 = s.placement[d.src].cycle, s.placement[d.dst].cycle
        if c2 < c1 + d.latency - d.distance * ii:
            out.append(Violation("dependency",
                                 f"{d.src}->{d.dst} (l={d.latency}, d={d.distance}): {c2} < {c1} + {d.latency} - {d.distance}*{ii}"))

    # (iii) routes use real edges and respect modulo exclusivity
    bus_use: dict[tuple[str, int], str] = {}
    wp_use: dict[tuple[str, int], str] = {}
    for r in s.routing:
        if r.producer not in s.placement:
            out.append(Violation("route", f"route for unknown producer {r.producer}"))
            continue
        src = g.op(r.producer)
        pl = s.placement[r.producer]
        if p.out_port(src.opcode, pl.slot) != r.out_port:
            out.append(Violation("route", f"{r.producer} on {pl.slot} does not write through {r.out_port}"))
        if r.cycle != pl.cycle + route_offset(p, src, s.writeback_offset):
            out.append(Violation("route", f"route of {r.producer} at cycle {r.cycle} does not match its issue cycle"))
        if (r.out_port, r.bus) not in p.port_bus_edges:
            out.append(Violation("route", f"no edge {r.out_port} -> {r.bus}"))
        if (r.bus, r.write_port) not in p.bus_wp_edges:
            out.append(Violation("route", f"no edge {r.bus} -> {r.write_port}"))
        if r.write_port not in p.register_file(r.rf).write_ports:
            out.append(Violation("route", f"{r.write_port} is not a write port of {r.rf}"))
        mc = r.cycle % ii
        prev = bus_use.setdefault((r.bus, mc), r.out_port)
        if prev != r.out_port:
            out.append(Violation("bus_conflict", f"bus {r.bus} driven by {prev} and {r.out_port} at modulo cycle {mc}"))
        prev = wp_use.setdefault((r.write_port, mc), r.bus)
        if prev != r.bus:
            out.append(Violation("write_port_conflict",
                                 f"write port {r.write_port} fed by {prev} and {r.bus} at modulo cycle {mc}"))

    # (iv) every data flow reaches the register file its consumer reads
    have = {(r.producer, r.rf) for r in s.routing}
    for d in g.data_deps():
        reg = g.dep_register(d)
        for rf in read_rfs(p, g.op(d.dst), s.placement[d.dst].slot, reg):
            if (d.src, rf) not in have:
                out.append(Violation("missing_route", f"{reg} from {d.src} never reaches {rf} for {d.dst}"))
    return out


# -- pipeline code ---------------------------------------------------------------


def expand_pipeline(s: ModuloSchedule, trip_count: int | None = None) -> PipelineCode:
    """Peel prolog and epilog around the kernel."""
    if trip_count is not None and trip_count < s.num_stages:
        raise ValueError(f"trip count {trip_count} < {s.num_stages} stages: the loop needs a guard")
    ii, stages = s.ii, s.num_stages
    ops = sorted(s.placement.items(), key=lambda kv: (kv[1].cycle, kv[0]))
    kernel: list[Bundle] = [{} for _ in range(ii)]
    for op, pl in ops:
        kernel[pl.cycle % ii][pl.slot] = (op, pl.cycle // ii)
    fill = (stages - 1) * ii
    prolog: list[Bundle] = [{} for _ in range(fill)]
    epilog: list[Bundle] = [{} for _ in range(fill)]
    for t in range(fill):
        for op, pl in ops:
            if pl.cycle <= t and (t - pl.cycle) % ii == 0:
                prolog[t][pl.slot] = (op, pl.cycle // ii)
            if pl.cycle >= ii + t and (pl.cycle - t) % ii == 0:
                epilog[t][pl.slot] = (op, pl.cycle // ii)
    return PipelineCode(ii, stages, prolog, kernel, epilog)


def flatten(code: PipelineCode, s: ModuloSchedule, trip_count: int) -> list[tuple[int, str, str, int]]:
    """Execute prolog, kernel x (trip - stages + 1), epilog as ``(time, slot, op, iteration)`` events."""
    events = []
    t = 0
    repeats = trip_count - code.num_stages + 1
    for bundle in code.prolog + code.kernel * repeats + code.epilog:
        for slot, (op, _stage) in bundle.items():
            events.append((t, slot, op, (t - s.placement[op].cycle) // code.ii))
        t += 1
    return sorted(events)


def overlapped(s: ModuloSchedule, trip_count: int) -> list[tuple[int, str, str, int]]:
    """The fully unrolled execution: iteration i issues op at ``i*II + cycle``."""
    return sorted((i * s.ii + pl.cycle, pl.slot, op, i) for i in range(trip_count) for op, pl in s.placement.items())


def replay(s: ModuloSchedule, trip_count: int, g: LoopGraph | None = None) -> list[str]:
    """Dynamically replay ``trip_count`` overlapped iterations and list every conflict."""
    conflicts = []
    slot_at: dict[tuple[int, str], tuple[str, int]] = {}
    bus_at: dict[tuple[int, str], str] = {}
    wp_at: dict[tuple[int, str], str] = {}
    for i in range(trip_count):
        base = i * s.ii
        for op, pl in s.placement.items():
            key = (base + pl.cycle, pl.slot)
            if key in slot_at:
                conflicts.append(f"t={key[0]}: {pl.slot} runs {slot_at[key]} and {(op, i)}")
            slot_at[key] = (op, i)
        for r in s.routing:
            t = base + r.cycle
            if bus_at.setdefault((t, r.bus), r.out_port) != r.out_port:
                conflicts.append(f"t={t}: bus {r.bus} driven by {bus_at[(t, r.bus)]} and {r.out_port}")
            if wp_at.setdefault((t, r.write_port), r.bus) != r.bus:
                conflicts.append(f"t={t}: write port {r.write_port} fed by {wp_at[(t, r.write_port)]} and {r.bus}")
    if g is not None:
        for d in g.deps:
            for i in range(d.distance, trip_count):
                t_src = (i - d.distance) * s.ii + s.placement[d.src].cycle
                t_dst = i * s.ii + s.placement[d.dst].cycle
                if t_dst < t_src + d.latency:
                    conflicts.append(f"{d.dst}@{i} at {t_dst} before {d.src}@{i - d.distance} + {d.latency}")
    return conflicts


def simulate(s: ModuloSchedule, trip_count: int, g: LoopGraph | None = None) -> int:
    """Total cycles for ``trip_count`` iterations: ``(trip_count - 1) * II + span``.

    Raises :class:`SimulationConflict` if the overlapped replay finds a clash.
    """
    if trip_count < s.num_stages:
        raise ValueError(f"trip count {trip_count} must be >= {s.num_stages} stages")
    conflicts = replay(s, trip_count, g)
    if conflicts:
        raise SimulationConflict(conflicts)
    return (trip_count - 1) * s.ii + s.span


# -- I/O ------------------------------------------------------------------------


def schedule_to_doc(s: ModuloSchedule) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "ii": s.ii,
        "stages": s.num_stages,
        "ops": [{"id": op, "cycle": pl.cycle, "slot": pl.slot}
                for op, pl in sorted(s.placement.items(), key=lambda kv: (kv[1].cycle, kv[1].slot, kv[0]))],
        "routing": [
            {"producer": r.producer, "cycle": r.cycle, "out_port": r.out_port, "bus": r.bus,
             "write_port": r.write_port, "rf": r.rf}
            for r in s.routing
        ],
    }
    if s.writeback_offset != "0":
        doc["writeback_offset"] = s.writeback_offset
    return doc


def load_schedule(doc: dict[str, Any] | str | Path) -> ModuloSchedule:
    if isinstance(doc, Path):
        doc = json.loads(doc.read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    try:
        jsonschema.validate(doc, SCHEDULE_SCHEMA)
    except jsonschema.ValidationError as err:
        raise InputError(err.message, _schema_path(err)) from None
    placement = {}
    for i, o in enumerate(doc["ops"]):
        if o["id"] in placement:
            raise InputError(f"operation {o['id']!r} placed twice", f"ops[{i}]")
        placement[o["id"]] = Placement(o["cycle"], o["slot"])
    routing = tuple(Route(r["producer"], r["cycle"], r["out_port"], r["bus"], r["write_port"], r["rf"])
                    for r in doc["routing"])
    return ModuloSchedule(doc["ii"], doc["stages"], placement, routing, doc.get("writeback_offset", "0"))


def render_table(s: ModuloSchedule, p: Processor, kernel: bool = False) -> str:
    """Bundles as rows (cycles) by issue-slot columns.

    With ``kernel=True`` rows are the II kernel cycles and cells carry the stage.
    """
    cols = p.slot_ids
    rows: dict[int, dict[str, str]] = defaultdict(dict)
    nrows = s.ii if kernel else s.span
    for op, pl in s.placement.items():
        if kernel:
            rows[pl.cycle % s.ii][pl.slot] = f"{op}[{pl.cycle // s.ii}]"
        else:
            rows[pl.cycle][pl.slot] = op
    header = ["cycle"] + cols
    body = [[str(c)] + [rows[c].get(col, ".") for col in cols] for c in range(nrows)]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in [header] + body]
    title = f"II={s.ii} stages={s.num_stages}" + (" (kernel)" if kernel else "")
    return "\n".join([title] + lines)
