"""Loop body representation: operations, virtual registers and dependencies."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema

from .errors import InputError
from .machine import ID_RE, Processor, _schema_path, slots_for

MAX_DISTANCE = 8
DEP_KINDS = ("data", "anti", "output", "other")

LOOP_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["ops"],
    "properties": {
        "ops": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "opcode"],
                "properties": {
                    "id": {"type": "string"},
                    "opcode": {"type": "string"},
                    "defs": {"type": "array", "items": {"type": "string"}, "maxItems": 1},
                    "uses": {"type": "array", "items": {"type": "string"}},
                    "pin": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "slot": {"type": "string"},
                            "cycle": {"type": "integer", "minimum": 0},
                        },
                    },
                },
            },
        },
        "deps": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["src", "dst"],
                "properties": {
                    "src": {"type": "string"},
                    "dst": {"type": "string"},
                    "latency": {"type": "integer"},
                    "distance": {"type": "integer", "minimum": 0},
                    "kind": {"enum": list(DEP_KINDS)},
                },
            },
        },
        "live_out": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["reg", "rfs"],
                "properties": {
                    "reg": {"type": "string"},
                    "rfs": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "trip_count": {"type": "integer", "minimum": 1},
    },
}


@dataclass(frozen=True)
class Operation:
    id: str
    opcode: str
    defs: tuple[str, ...] = ()
    uses: tuple[str, ...] = ()
    pinned_slot: str | None = None
    pinned_cycle: int | None = None


@dataclass(frozen=True)
class Dependency:
    src: str
    dst: str
    latency: int
    distance: int = 0
    kind: str = "data"


@dataclass(frozen=True)
class Finding:
    message: str
    ops: tuple[str, ...] = ()
    dep: int | None = None


@dataclass(frozen=True)
class LoopGraph:
    operations: tuple[Operation, ...]
    deps: tuple[Dependency, ...]
    virtual_registers: tuple[str, ...]
    # reg -> register files an out-of-loop consumer reads it from
    live_out: dict[str, tuple[str, ...]] = field(default_factory=dict, hash=False)
    trip_count: int | None = None

    @property
    def op_ids(self) -> list[str]:
        return [o.id for o in self.operations]

    def op(self, op_id: str) -> Operation:
        for o in self.operations:
            if o.id == op_id:
                return o
        raise KeyError(f"unknown operation {op_id!r}")

    def definer(self, reg: str) -> Operation | None:
        for o in self.operations:
            if reg in o.defs:
                return o
        return None

    def users(self, reg: str) -> list[Operation]:
        return [o for o in self.operations if reg in o.uses]

    def dep_register(self, dep: Dependency) -> str | None:
        """Register carried by a data dependency, ``None`` for other kinds."""
        if dep.kind != "data":
            return None
        src = self.op(dep.src)
        return src.defs[0] if src.defs else None

    def data_deps(self) -> list[Dependency]:
        return [d for d in self.deps if d.kind == "data"]

    def to_doc(self) -> dict[str, Any]:
        ops = []
        for o in self.operations:
            entry: dict[str, Any] = {"id": o.id, "opcode": o.opcode, "defs": list(o.defs), "uses": list(o.uses)}
            pin = {}
            if o.pinned_slot is not None:
                pin["slot"] = o.pinned_slot
            if o.pinned_cycle is not None:
                pin["cycle"] = o.pinned_cycle
            if pin:
                entry["pin"] = pin
            ops.append(entry)
        doc: dict[str, Any] = {
            "ops": ops,
            "deps": [
                {"src": d.src, "dst": d.dst, "latency": d.latency, "distance": d.distance, "kind": d.kind}
                for d in self.deps
            ],
            "live_out": [{"reg": r, "rfs": list(rfs)} for r, rfs in self.live_out.items()],
        }
        if self.trip_count is not None:
            doc["trip_count"] = self.trip_count
        return doc


def load_loop(doc: dict[str, Any] | str | Path, p: Processor) -> LoopGraph:
    """Validate a loop document against machine ``p``.

    A data dependency without an explicit latency takes the producer opcode's latency.
    """
    if isinstance(doc, Path):
        doc = json.loads(doc.read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    try:
        jsonschema.validate(doc, LOOP_SCHEMA)
    except jsonschema.ValidationError as err:
        raise InputError(err.message, _schema_path(err)) from None
    if not doc["ops"]:
        raise InputError("empty loop", "ops")

    ops: list[Operation] = []
    ids: set[str] = set()
    defined: dict[str, str] = {}
    regs: list[str] = []
    for i, odoc in enumerate(doc["ops"]):
        path = f"ops[{i}]"
        oid = odoc["id"]
        if not ID_RE.match(oid):
            raise InputError(f"invalid identifier {oid!r}", f"{path}.id")
        if oid in ids:
            raise InputError(f"duplicate operation id {oid!r}", f"{path}.id")
        ids.add(oid)
        opcode = odoc["opcode"]
        if opcode not in p.opcode_table:
            raise InputError(f"unknown opcode {opcode!r}", f"{path}.opcode")
        defs = tuple(odoc.get("defs", []))
        uses = tuple(odoc.get("uses", []))
        for j, reg in enumerate(defs + uses):
            if not ID_RE.match(reg):
                raise InputError(f"invalid register name {reg!r}", path)
            if reg not in regs:
                regs.append(reg)
        for reg in defs:
            if reg in defined:
                raise InputError(f"register {reg!r} defined by both {defined[reg]!r} and {oid!r}", f"{path}.defs")
            defined[reg] = oid
        if defs and all(port is None for port in p.info(opcode).out_port.values()):
            raise InputError(f"opcode {opcode!r} produces no value but {oid!r} defines {defs[0]!r}", f"{path}.defs")
        for slot_id in slots_for(p, opcode):
            if len(uses) > len(p.info(opcode).operand_rfs[slot_id]):
                raise InputError(
                    f"{oid!r} reads {len(uses)} operands but {opcode!r} on {slot_id} declares "
                    f"{len(p.info(opcode).operand_rfs[slot_id])} operand register files",
                    f"{path}.uses",
                )
        pin = odoc.get("pin", {})
        slot = pin.get("slot")
        if slot is not None and slot not in slots_for(p, opcode):
            raise InputError(f"pinned slot {slot!r} cannot execute {opcode!r}", f"{path}.pin.slot")
        ops.append(Operation(oid, opcode, defs, uses, slot, pin.get("cycle")))

    deps: list[Dependency] = []
    by_id = {o.id: o for o in ops}
    for i, ddoc in enumerate(doc.get("deps", [])):
        path = f"deps[{i}]"
        src, dst = ddoc["src"], ddoc["dst"]
        for end in (src, dst):
            if end not in by_id:
                raise InputError(f"dependency endpoint {end!r} is not an operation", path)
        kind = ddoc.get("kind", "data")
        distance = ddoc.get("distance", 0)
        if distance > MAX_DISTANCE:
            raise InputError(f"distance {distance} exceeds the supported maximum {MAX_DISTANCE}", f"{path}.distance")
        if kind == "data":
            s, d = by_id[src], by_id[dst]
            if not s.defs or s.defs[0] not in d.uses:
                raise InputError(f"data dependency {src}->{dst} shares no register", path)
        latency = ddoc.get("latency")
        if latency is None:
            latency = p.latency(by_id[src].opcode) if kind == "data" else 0
        deps.append(Dependency(src, dst, latency, distance, kind))

    live_out: dict[str, tuple[str, ...]] = {}
    rf_ids = {rf.id for rf in p.register_files}
    for i, ldoc in enumerate(doc.get("live_out", [])):
        reg = ldoc["reg"]
        if not ID_RE.match(reg):
            raise InputError(f"invalid register name {reg!r}", f"live_out[{i}].reg")
        for j, rf in enumerate(ldoc["rfs"]):
            if rf not in rf_ids:
                raise InputError(f"undeclared register file {rf!r}", f"live_out[{i}].rfs[{j}]")
        live_out[reg] = tuple(dict.fromkeys(live_out.get(reg, ()) + tuple(ldoc["rfs"])))
        if reg not in regs:
            regs.append(reg)

    return LoopGraph(tuple(ops), tuple(deps), tuple(regs), live_out, doc.get("trip_count"))


def augment_loop_carried(g: LoopGraph) -> LoopGraph:
    """Add the reverse anti-dependency (latency 0, distance 1) for every same-iteration data dep.

    The producer of the next iteration must not overwrite the register
    before the consumer of the current one has read it. Idempotent.
    """
    existing = {(d.src, d.dst, d.latency, d.distance) for d in g.deps}
    extra = []
    for d in g.deps:
        if d.kind != "data" or d.distance != 0 or d.src == d.dst:
            continue
        key = (d.dst, d.src, 0, 1)
        if key not in existing:
            existing.add(key)
            extra.append(Dependency(d.dst, d.src, 0, 1, "anti"))
    if not extra:
        return g
    return replace(g, deps=g.deps + tuple(extra))


def validate(g: LoopGraph, p: Processor) -> list[Finding]:
    """Report invariant violations as data instead of raising."""
    findings: list[Finding] = []
    ids = [o.id for o in g.operations]
    if not ids:
        findings.append(Finding("empty loop"))
    seen = set()
    for oid in ids:
        if oid in seen:
            findings.append(Finding(f"duplicate operation id {oid!r}", (oid,)))
        seen.add(oid)
    defined: dict[str, str] = {}
    for o in g.operations:
        if len(o.defs) > 1:
            findings.append(Finding(f"{o.id} defines more than one register", (o.id,)))
        for reg in o.defs:
            if reg in defined:
                findings.append(Finding(f"register {reg!r} defined twice", (defined[reg], o.id)))
            defined[reg] = o.id
        if o.opcode not in p.opcode_table:
            findings.append(Finding(f"{o.id}: unknown opcode {o.opcode!r}", (o.id,)))
        elif not slots_for(p, o.opcode):
            findings.append(Finding(f"{o.id}: opcode {o.opcode!r} has no legal slot", (o.id,)))
        for reg in o.defs + o.uses:
            if reg not in g.virtual_registers:
                findings.append(Finding(f"{o.id}: register {reg!r} not declared", (o.id,)))
    for i, d in enumerate(g.deps):
        if d.src not in seen or d.dst not in seen:
            findings.append(Finding(f"dependency {d.src}->{d.dst} has a dangling endpoint", dep=i))
            continue
        if d.distance < 0 or d.distance > MAX_DISTANCE:
            findings.append(Finding(f"dependency {d.src}->{d.dst} has distance {d.distance}", dep=i))
        if d.kind == "data":
            reg = g.dep_register(d)
            if reg is None or reg not in g.op(d.dst).uses:
                findings.append(Finding(f"data dependency {d.src}->{d.dst} shares no register", (d.src, d.dst), i))
    return findings
