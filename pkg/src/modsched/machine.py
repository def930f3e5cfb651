"""Declarative VLIW machine description.

A machine is a set of issue slots, each executing a subset of opcodes and
owning output ports; a set of buses; and register files owning write ports.
Values travel ``output port -> bus -> write port``. The topology is given by
two edge sets, ``port_bus`` and ``bus_wp``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .errors import InputError

ID_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")

MACHINE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "slots", "buses", "register_files", "port_bus", "bus_wp"],
    "properties": {
        "name": {"type": "string"},
        "slots": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "opcodes"],
                "properties": {
                    "id": {"type": "string"},
                    "out_ports": {"type": "array", "items": {"type": "string"}},
                    "opcodes": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["name"],
                            "properties": {
                                "name": {"type": "string"},
                                "latency": {"type": "integer", "minimum": 0},
                                "out_port": {"type": ["string", "null"]},
                                "operand_rfs": {"type": "array", "items": {"type": "string"}},
                            },
                        },
                    },
                },
            },
        },
        "buses": {"type": "array", "items": {"type": "string"}},
        "register_files": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "capacity", "write_ports"],
                "properties": {
                    "id": {"type": "string"},
                    "capacity": {"type": "integer", "minimum": 1},
                    "write_ports": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                },
            },
        },
        "port_bus": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
        "bus_wp": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
    },
}


@dataclass(frozen=True)
class IssueSlot:
    id: str
    legal_opcodes: frozenset[str]
    output_ports: tuple[str, ...]


@dataclass(frozen=True)
class RegisterFile:
    id: str
    capacity: int
    write_ports: tuple[str, ...]


@dataclass(frozen=True)
class OpcodeInfo:
    """Per-opcode data. Latency is slot independent; ports and operand files are per slot."""

    opcode: str
    latency: int
    out_port: dict[str, str | None] = field(hash=False)
    operand_rfs: dict[str, tuple[str, ...]] = field(hash=False)


@dataclass(frozen=True, eq=False)
class Processor:
    name: str
    slots: tuple[IssueSlot, ...]
    buses: tuple[str, ...]
    register_files: tuple[RegisterFile, ...]
    port_bus_edges: frozenset[tuple[str, str]]
    bus_wp_edges: frozenset[tuple[str, str]]
    opcode_table: dict[str, OpcodeInfo]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Processor):
            return NotImplemented
        return self.to_doc() == other.to_doc()

    __hash__ = object.__hash__

    @property
    def slot_ids(self) -> list[str]:
        return [s.id for s in self.slots]

    def slot(self, slot_id: str) -> IssueSlot:
        for s in self.slots:
            if s.id == slot_id:
                return s
        raise KeyError(f"unknown slot {slot_id!r}")

    def register_file(self, rf_id: str) -> RegisterFile:
        for rf in self.register_files:
            if rf.id == rf_id:
                return rf
        raise KeyError(f"unknown register file {rf_id!r}")

    @property
    def output_ports(self) -> list[str]:
        return [port for s in self.slots for port in s.output_ports]

    @property
    def write_ports(self) -> list[str]:
        return [wp for rf in self.register_files for wp in rf.write_ports]

    def rf_of_write_port(self, wp: str) -> str:
        for rf in self.register_files:
            if wp in rf.write_ports:
                return rf.id
        raise KeyError(f"unknown write port {wp!r}")

    def latency(self, opcode: str) -> int:
        return self.info(opcode).latency

    def info(self, opcode: str) -> OpcodeInfo:
        try:
            return self.opcode_table[opcode]
        except KeyError:
            raise KeyError(f"unknown opcode {opcode!r}") from None

    def out_port(self, opcode: str, slot_id: str) -> str | None:
        return self.info(opcode).out_port[slot_id]

    def operand_rf(self, opcode: str, slot_id: str, index: int) -> str:
        return self.info(opcode).operand_rfs[slot_id][index]

    def to_doc(self) -> dict[str, Any]:
        slots = []
        for s in self.slots:
            ops = []
            for name in sorted(s.legal_opcodes):
                info = self.opcode_table[name]
                ops.append(
                    {
                        "name": name,
                        "latency": info.latency,
                        "out_port": info.out_port[s.id],
                        "operand_rfs": list(info.operand_rfs[s.id]),
                    }
                )
            slots.append({"id": s.id, "opcodes": ops, "out_ports": list(s.output_ports)})
        return {
            "name": self.name,
            "slots": slots,
            "buses": list(self.buses),
            "register_files": [
                {"id": rf.id, "capacity": rf.capacity, "write_ports": list(rf.write_ports)}
                for rf in self.register_files
            ],
            "port_bus": [list(e) for e in sorted(self.port_bus_edges)],
            "bus_wp": [list(e) for e in sorted(self.bus_wp_edges)],
        }


def _schema_path(err: jsonschema.ValidationError) -> str:
    parts = []
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else f".{p}")
    return "".join(parts).lstrip(".") or "<root>"


def _check_id(value: str, path: str) -> None:
    if not ID_RE.match(value):
        raise InputError(f"invalid identifier {value!r}", path)


def load_machine(doc: dict[str, Any] | str | Path) -> Processor:
    """Validate a machine document and build a :class:`Processor`.

    ``doc`` may be an already-parsed mapping, a JSON string, or a path.
    Raises :class:`InputError` naming the offending element.
    """
    if isinstance(doc, Path):
        doc = json.loads(doc.read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    try:
        jsonschema.validate(doc, MACHINE_SCHEMA)
    except jsonschema.ValidationError as err:
        raise InputError(err.message, _schema_path(err)) from None

    seen: dict[str, str] = {}

    def declare(value: str, kind: str, path: str) -> None:
        _check_id(value, path)
        if value in seen:
            raise InputError(f"duplicate id {value!r} (already a {seen[value]})", path)
        seen[value] = kind

    for i, bus in enumerate(doc["buses"]):
        declare(bus, "bus", f"buses[{i}]")
    register_files = []
    for i, rf in enumerate(doc["register_files"]):
        declare(rf["id"], "register file", f"register_files[{i}].id")
        for j, wp in enumerate(rf["write_ports"]):
            declare(wp, "write port", f"register_files[{i}].write_ports[{j}]")
        register_files.append(RegisterFile(rf["id"], rf["capacity"], tuple(rf["write_ports"])))
    rf_ids = {rf.id for rf in register_files}

    slots = []
    latencies: dict[str, int] = {}
    out_ports: dict[str, dict[str, str | None]] = {}
    operand_rfs: dict[str, dict[str, tuple[str, ...]]] = {}
    for i, sdoc in enumerate(doc["slots"]):
        declare(sdoc["id"], "slot", f"slots[{i}].id")
        ports = tuple(sdoc.get("out_ports", []))
        for j, port in enumerate(ports):
            declare(port, "output port", f"slots[{i}].out_ports[{j}]")
        names = set()
        for j, odoc in enumerate(sdoc["opcodes"]):
            path = f"slots[{i}].opcodes[{j}]"
            name = odoc["name"]
            _check_id(name, f"{path}.name")
            if name in names:
                raise InputError(f"opcode {name!r} listed twice on slot", path)
            names.add(name)
            latency = odoc.get("latency", 1)
            if latencies.setdefault(name, latency) != latency:
                raise InputError(
                    f"opcode {name!r} has latency {latency} here but {latencies[name]} elsewhere",
                    f"{path}.latency",
                )
            port = odoc.get("out_port")
            if port is not None and port not in ports:
                raise InputError(f"out_port {port!r} does not belong to slot {sdoc['id']!r}", f"{path}.out_port")
            rfs = tuple(odoc.get("operand_rfs", []))
            for k, rf in enumerate(rfs):
                if rf not in rf_ids:
                    raise InputError(f"undeclared register file {rf!r}", f"{path}.operand_rfs[{k}]")
            out_ports.setdefault(name, {})[sdoc["id"]] = port
            operand_rfs.setdefault(name, {})[sdoc["id"]] = rfs
        slots.append(IssueSlot(sdoc["id"], frozenset(names), ports))

    # Opcodes must agree across slots on whether they produce a value.
    for name, per_slot in out_ports.items():
        producing = {port is not None for port in per_slot.values()}
        if len(producing) > 1:
            raise InputError(f"opcode {name!r} produces a value on some slots but not others", "slots")

    ports_all = {p for s in slots for p in s.output_ports}
    buses = set(doc["buses"])
    wps = {wp for rf in register_files for wp in rf.write_ports}
    port_bus = set()
    for i, (port, bus) in enumerate(doc["port_bus"]):
        if port not in ports_all:
            raise InputError(f"edge ({port}, {bus}) names undeclared output port {port!r}", f"port_bus[{i}]")
        if bus not in buses:
            raise InputError(f"edge ({port}, {bus}) names undeclared bus {bus!r}", f"port_bus[{i}]")
        port_bus.add((port, bus))
    bus_wp = set()
    for i, (bus, wp) in enumerate(doc["bus_wp"]):
        if bus not in buses:
            raise InputError(f"edge ({bus}, {wp}) names undeclared bus {bus!r}", f"bus_wp[{i}]")
        if wp not in wps:
            raise InputError(f"edge ({bus}, {wp}) names undeclared write port {wp!r}", f"bus_wp[{i}]")
        bus_wp.add((bus, wp))

    table = {
        name: OpcodeInfo(name, latencies[name], out_ports[name], operand_rfs[name])
        for name in sorted(latencies)
    }
    return Processor(
        name=doc["name"],
        slots=tuple(slots),
        buses=tuple(doc["buses"]),
        register_files=tuple(register_files),
        port_bus_edges=frozenset(port_bus),
        bus_wp_edges=frozenset(bus_wp),
        opcode_table=table,
    )


def slots_for(p: Processor, opcode: str) -> list[str]:
    """Slots that can execute ``opcode``, in machine order."""
    if opcode not in p.opcode_table:
        raise KeyError(f"unknown opcode {opcode!r}")
    return [s.id for s in p.slots if opcode in s.legal_opcodes]


def routing_options(p: Processor, port: str, rf: str) -> list[tuple[str, str]]:
    """All ``(bus, write_port)`` pairs that carry a value from ``port`` into ``rf``.

    An empty list means the value cannot reach the register file at all.
    """
    if port not in p.output_ports:
        raise KeyError(f"unknown output port {port!r}")
    wps = p.register_file(rf).write_ports
    return sorted(
        (bus, wp)
        for bus in p.buses
        if (port, bus) in p.port_bus_edges
        for wp in wps
        if (bus, wp) in p.bus_wp_edges
    )
