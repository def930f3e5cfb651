"""Constraint encoding of modulo scheduling for one (II, stage count) pair.

Every constraint carries a stable label such as
``c3/slot=LSU0/o1=LD/o2=ST``; unsat cores are reported in terms of these
labels and :mod:`modsched.explain` turns them back into diagnostics.

Two encodings are available. ``compact`` compares modulo cycles directly
(``Cycle mod II``) and indexes the routing variables by modulo cycle.
``paper`` enumerates every pair of absolute cycles that collide modulo II
and keeps one routing variable per absolute cycle. Both accept exactly the
same schedules.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Iterable

from . import expr as E
from .expr import Expr
from .loop import LoopGraph, Operation
from .machine import Processor, routing_options, slots_for

ENCODINGS = ("compact", "paper")
WRITEBACK_OFFSETS = ("0", "latency")


@dataclass(frozen=True)
class LabelInfo:
    family: str
    entities: dict[str, Any]
    text: str


def var_name(key: tuple) -> str:
    return "/".join(str(k) for k in key)


@dataclass
class Problem:
    ii: int
    num_stages: int
    encoding: str = "compact"
    writeback_offset: str = "0"
    int_vars: dict[tuple, Expr] = field(default_factory=dict)
    bool_vars: dict[tuple, Expr] = field(default_factory=dict)
    domains: dict[str, tuple[int, int]] = field(default_factory=dict)
    constraints: list[tuple[str, Expr]] = field(default_factory=list)
    label_info: dict[str, LabelInfo] = field(default_factory=dict)
    rp_files: tuple[str, ...] = ()
    route_cycles: int = 0

    @property
    def max_cycle(self) -> int:
        return self.ii * self.num_stages - 1

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.constraints]

    def int_var(self, key: tuple, lo: int, hi: int) -> Expr:
        v = self.int_vars.get(key)
        if v is None:
            name = var_name(key)
            v = self.int_vars[key] = E.int_var(name)
            self.domains[name] = (lo, hi)
        return v

    def bool_var(self, key: tuple) -> Expr:
        v = self.bool_vars.get(key)
        if v is None:
            v = self.bool_vars[key] = E.bool_var(var_name(key))
        return v

    def add(self, label: str, constraint: Expr, family: str, text: str, **entities: Any) -> None:
        if label in self.label_info:
            raise ValueError(f"duplicate constraint label {label!r}")
        self.constraints.append((label, constraint))
        self.label_info[label] = LabelInfo(family, entities, text)

    def var_sorts(self) -> dict[str, str]:
        sorts = {v.args[0]: "int" for v in self.int_vars.values()}
        sorts.update({v.args[0]: "bool" for v in self.bool_vars.values()})
        return sorts

    def copy(self) -> Problem:
        new = copy.copy(self)
        new.int_vars = dict(self.int_vars)
        new.bool_vars = dict(self.bool_vars)
        new.domains = dict(self.domains)
        new.constraints = list(self.constraints)
        new.label_info = dict(self.label_info)
        return new

    def restricted(self, labels: Iterable[str]) -> Problem:
        """Same variables, only the constraints named in ``labels``."""
        keep = set(labels)
        new = self.copy()
        new.constraints = [(lbl, c) for lbl, c in self.constraints if lbl in keep]
        new.label_info = {lbl: self.label_info[lbl] for lbl, _ in new.constraints}
        return new

    # variable accessors used by the decoder and the register-pressure encoder
    def cycle(self, op: str) -> Expr:
        return self.int_vars[("cycle", op)]

    def slot(self, op: str, slot: str) -> Expr:
        return self.bool_vars[("slot", op, slot)]


def read_rfs(p: Processor, op: Operation, slot: str, reg: str) -> list[str]:
    """Register files ``op`` reads ``reg`` from when issued on ``slot``."""
    rfs = p.info(op.opcode).operand_rfs[slot]
    return sorted({rfs[i] for i, r in enumerate(op.uses) if r == reg})


def legal_slots(p: Processor, op: Operation) -> list[str]:
    return slots_for(p, op.opcode)


def route_offset(p: Processor, op: Operation, writeback_offset: str) -> int:
    return p.latency(op.opcode) if writeback_offset == "latency" else 0


def encode_core(
    g: LoopGraph,
    p: Processor,
    ii: int,
    num_stages: int,
    encoding: str = "compact",
    writeback_offset: str = "0",
) -> Problem:
    """Build the scheduling problem without register pressure."""
    if ii < 1 or num_stages < 1:
        raise ValueError("ii and num_stages must be >= 1")
    if encoding not in ENCODINGS:
        raise ValueError(f"unknown encoding {encoding!r}")
    if writeback_offset not in WRITEBACK_OFFSETS:
        raise ValueError(f"unknown writeback offset {writeback_offset!r}")
    pr = Problem(ii, num_stages, encoding, writeback_offset)
    max_cycle = pr.max_cycle
    paper = encoding == "paper"
    max_off = max((route_offset(p, o, writeback_offset) for o in g.operations), default=0)
    pr.route_cycles = max_cycle + 1 + max_off if paper else ii

    slots = {o.id: legal_slots(p, o) for o in g.operations}
    for o in g.operations:
        pr.int_var(("cycle", o.id), 0, max_cycle)
        for s in slots[o.id]:
            pr.bool_var(("slot", o.id, s))
    # only ports that can carry a value some consumer reads get routing variables
    ports_used = {p.out_port(g.op(d.src).opcode, s) for d in g.data_deps() for s in slots[d.src]}
    pb_edges = sorted(e for e in p.port_bus_edges if e[0] in ports_used)
    buses_used = {b for _, b in pb_edges}
    bw_edges = sorted(e for e in p.bus_wp_edges if e[0] in buses_used)
    for c in range(pr.route_cycles):
        for port, bus in pb_edges:
            pr.bool_var(("cpb", c, port, bus))
        for bus, wp in bw_edges:
            pr.bool_var(("cbw", c, bus, wp))

    # C1, C2
    for o in g.operations:
        cyc = pr.cycle(o.id)
        pr.add(f"c1/op={o.id}", (cyc >= 0) & (cyc <= max_cycle), "c1",
               f"{o.id} must issue within cycles 0..{max_cycle}", op=o.id, max_cycle=max_cycle)
        pr.add(f"c2/op={o.id}", E.exactly_one(*(pr.slot(o.id, s) for s in slots[o.id])), "c2",
               f"{o.id} must use exactly one of {', '.join(slots[o.id])}", op=o.id, slots=list(slots[o.id]))

    # C3
    ops = list(g.operations)
    for s in p.slot_ids:
        on_s = [o for o in ops if s in slots[o.id]]
        for i, o1 in enumerate(on_s):
            for o2 in on_s[i + 1:]:
                both = pr.slot(o1.id, s) & pr.slot(o2.id, s)
                c1v, c2v = pr.cycle(o1.id), pr.cycle(o2.id)
                info = dict(slot=s, ops=[o1.id, o2.id])
                text = f"slot {s} cannot hold both {o1.id} and {o2.id} in one modulo cycle"
                if not paper:
                    pr.add(f"c3/slot={s}/o1={o1.id}/o2={o2.id}",
                           E.not_(E.and_(both, E.eq(c1v % ii, c2v % ii))),
                           "c3", text, **info)
                    continue
                for a in range(max_cycle + 1):
                    for b in range(a % ii, max_cycle + 1, ii):
                        pr.add(f"c3/slot={s}/o1={o1.id}/o2={o2.id}/c1={a}/c2={b}",
                               E.not_(E.and_(both, E.eq(c1v, a), E.eq(c2v, b))),
                               "c3", text, mc=a % ii, **info)

    # C4
    for d in g.deps:
        label = f"c4/src={d.src}/dst={d.dst}/l={d.latency}/d={d.distance}"
        if label in pr.label_info:
            continue
        pr.add(label, pr.cycle(d.dst) >= pr.cycle(d.src) + (d.latency - d.distance * ii), "c4",
               f"{d.dst} must issue >= {d.latency} - {d.distance}*II cycles after {d.src}",
               src=d.src, dst=d.dst, latency=d.latency, distance=d.distance, kind=d.kind)

    # C5
    done = set()
    for d in g.data_deps():
        reg = g.dep_register(d)
        o1, o2 = g.op(d.src), g.op(d.dst)
        off = route_offset(p, o1, writeback_offset)
        for s1 in slots[o1.id]:
            port = p.out_port(o1.opcode, s1)
            for s2 in slots[o2.id]:
                for rf in read_rfs(p, o2, s2, reg):
                    key = (o1.id, o2.id, s1, s2, rf)
                    if key in done:
                        continue
                    done.add(key)
                    base = f"c5/src={o1.id}/dst={o2.id}/s1={s1}/s2={s2}/rf={rf}"
                    both = pr.slot(o1.id, s1) & pr.slot(o2.id, s2)
                    options = routing_options(p, port, rf)
                    wps = sorted({wp for _, wp in options})
                    buses = sorted({b for b, _ in options})
                    info = dict(src=o1.id, dst=o2.id, s1=s1, s2=s2, rf=rf, reg=reg, port=port,
                                write_ports=wps, buses=buses)
                    if not options:
                        pr.add(f"{base}/noroute", E.not_(both), "c5",
                               f"no bus connects {port} to {rf}: {o1.id} on {s1} cannot feed {o2.id} on {s2}",
                               **info)
                        continue
                    for c in range(pr.route_cycles):
                        at = E.eq((pr.cycle(o1.id) + off) % ii, c) if not paper else E.eq(pr.cycle(o1.id) + off, c)
                        route = E.or_(*(
                            pr.bool_vars[("cpb", c, port, b)] & pr.bool_vars[("cbw", c, b, wp)]
                            for b, wp in options
                        ))
                        pr.add(f"{base}/{'c' if paper else 'mc'}={c}", E.implies(E.and_(both, at), route), "c5",
                               f"{o1.id} on {s1} must route {reg} from {port} to {rf} at cycle {c}",
                               mc=c % ii, **info)

    # C6, C7
    for bus in p.buses:
        ports = sorted(port for port, b in pb_edges if b == bus)
        _exclusive(pr, "c6", "bus", bus, "cpb", [(port, bus) for port in ports], "port",
                   f"bus {bus} can carry one output port per modulo cycle")
    for wp in p.write_ports:
        buses = sorted(b for b, w in bw_edges if w == wp)
        _exclusive(pr, "c7", "wp", wp, "cbw", [(b, wp) for b in buses], "bus",
                   f"write port {wp} of {p.rf_of_write_port(wp)} accepts one bus per modulo cycle",
                   rf=p.rf_of_write_port(wp))

    # pins
    for o in g.operations:
        if o.pinned_cycle is not None:
            pr.add(f"pin/op={o.id}/cycle={o.pinned_cycle}", E.eq(pr.cycle(o.id), o.pinned_cycle), "pin",
                   f"{o.id} is pinned to cycle {o.pinned_cycle}", op=o.id, cycle=o.pinned_cycle)
        if o.pinned_slot is not None:
            pr.add(f"pin/op={o.id}/slot={o.pinned_slot}", pr.slot(o.id, o.pinned_slot), "pin",
                   f"{o.id} is pinned to slot {o.pinned_slot}", op=o.id, slot=o.pinned_slot)
    return pr


def _exclusive(pr: Problem, family: str, kind: str, shared: str, prefix: str,
               edges: list[tuple[str, str]], other: str, text: str, **extra: Any) -> None:
    """At most one of ``edges`` active per modulo cycle (C6 for buses, C7 for write ports)."""
    ii = pr.ii
    if pr.encoding == "compact":
        for c in range(ii):
            for i, e1 in enumerate(edges):
                for e2 in edges[i + 1:]:
                    a, b = _other(e1, shared), _other(e2, shared)
                    pr.add(f"{family}/{kind}={shared}/{other}1={a}/{other}2={b}/mc={c}",
                           E.not_(pr.bool_vars[(prefix, c, *e1)] & pr.bool_vars[(prefix, c, *e2)]),
                           family, text, **{kind: shared}, **{other + "s": [a, b]}, mc=c, **extra)
        return
    n = pr.route_cycles
    for c1 in range(n):
        for c2 in range(c1 % ii, n, ii):
            for i, e1 in enumerate(edges):
                for j, e2 in enumerate(edges):
                    if i == j or (c1 == c2 and j < i):
                        continue
                    a, b = _other(e1, shared), _other(e2, shared)
                    pr.add(f"{family}/{kind}={shared}/{other}1={a}/{other}2={b}/c1={c1}/c2={c2}",
                           E.not_(pr.bool_vars[(prefix, c1, *e1)] & pr.bool_vars[(prefix, c2, *e2)]),
                           family, text, **{kind: shared}, **{other + "s": [a, b]}, mc=c1 % ii, **extra)


def _other(edge: tuple[str, str], shared: str) -> str:
    return edge[0] if edge[1] == shared else edge[1]


def encode_register_pressure(pr: Problem, g: LoopGraph, p: Processor, rfs: Iterable[str]) -> Problem:
    """Return a copy of ``pr`` extended with register-pressure constraints for ``rfs``.

    Live ranges are tracked on the modulo cycles ``0..II-1`` of the kernel.
    Register files already covered by ``pr`` are skipped.
    """
    rfs = list(dict.fromkeys(rfs))
    if not rfs:
        raise ValueError("register-pressure encoding needs at least one register file")
    for rf in rfs:
        p.register_file(rf)
    new = pr.copy()
    ii = pr.ii
    slots = {o.id: legal_slots(p, o) for o in g.operations}

    for v in g.virtual_registers:
        key = ("start", v)
        if key in new.int_vars:
            continue
        start = new.int_var(key, 0, ii - 1)
        d = g.definer(v)
        if d is None:
            new.add(f"r1/v={v}", E.eq(start, 0), "r1", f"{v} is not defined in the loop; it starts live at 0", reg=v)
        else:
            new.add(f"r1/v={v}", E.eq(start, new.cycle(d.id) % ii), "r1",
                    f"{v} becomes live when {d.id} issues", reg=v, op=d.id)

    for rf in rfs:
        if rf in new.rp_files:
            continue
        new.rp_files = new.rp_files + (rf,)
        cap = p.register_file(rf).capacity
        for v in g.virtual_registers:
            start = new.int_vars[("start", v)]
            reads = [(u, s) for u in g.users(v) for s in slots[u.id] if rf in read_rfs(p, u, s, v)]
            used = new.bool_var(("used", rf, v))
            ubd = new.bool_var(("ubd", rf, v))
            live_out = new.bool_var(("liveout", rf, v))
            min_use = new.int_var(("minuse", rf, v), 0, ii)
            max_use = new.int_var(("maxuse", rf, v), -1, ii - 1)
            max_ubd = new.int_var(("maxusebd", rf, v), -1, ii - 1)
            end = new.int_var(("end", rf, v), -1, ii - 1)
            ents = dict(rf=rf, reg=v)

            at = [(new.slot(u.id, s), new.cycle(u.id) % ii) for u, s in reads]
            new.add(f"r2/used/rf={rf}/v={v}", E.eq(used, E.or_(*(sl for sl, _ in at))), "r2",
                    f"{v} is read from {rf} iff some reader is issued on a slot reading {rf}", **ents)
            new.add(f"r2/minuse/rf={rf}/v={v}", _is_min(min_use, [E.ite(sl, mc, ii) for sl, mc in at], ii), "r2",
                    f"first modulo-cycle read of {v} in {rf}", **ents)
            new.add(f"r2/maxuse/rf={rf}/v={v}", _is_max(max_use, [E.ite(sl, mc, -1) for sl, mc in at], -1), "r2",
                    f"last modulo-cycle read of {v} in {rf}", **ents)
            new.add(f"r2/maxusebd/rf={rf}/v={v}",
                    _is_max(max_ubd, [E.ite(sl & (mc <= start), mc, -1) for sl, mc in at], -1), "r2",
                    f"last read of {v} in {rf} at or before its definition", **ents)
            new.add(f"r3/rf={rf}/v={v}", E.eq(ubd, used & (min_use <= start)), "r3",
                    f"{v} is read in {rf} before (or as) it is redefined", **ents)
            new.add(f"r4/rf={rf}/v={v}", E.eq(end, E.ite(ubd, max_ubd, max_use)), "r4",
                    f"end of the live range of {v} in {rf}", **ents)
            new.add(f"r5/rf={rf}/v={v}", E.eq(live_out, rf in g.live_out.get(v, ())), "r5",
                    f"{v} is {'' if rf in g.live_out.get(v, ()) else 'not '}live out of the loop in {rf}", **ents)
            for c in range(ii):
                live = new.bool_var(("live", rf, v, c))
                new.add(f"r6/rf={rf}/v={v}/c={c}",
                        E.eq(live, E.ite(ubd, (end >= c) | (start <= c), (start <= c) & ((end >= c) | live_out))),
                        "r6", f"{v} live in {rf} at modulo cycle {c}", c=c, **ents)
        for c in range(ii):
            lives = [new.bool_vars[("live", rf, v, c)] for v in g.virtual_registers]
            new.add(f"r7/rf={rf}/c={c}", E.count(*lives) <= cap, "r7",
                    f"at most {cap} registers of {rf} live at modulo cycle {c}", rf=rf, c=c, capacity=cap)
    return new


def _is_min(x: Expr, terms: list[Expr], empty: int) -> Expr:
    if not terms:
        return E.eq(x, empty)
    return E.and_(*(x <= t for t in terms), E.or_(*(E.eq(x, t) for t in terms)))


def _is_max(x: Expr, terms: list[Expr], empty: int) -> Expr:
    if not terms:
        return E.eq(x, empty)
    return E.and_(*(x >= t for t in terms), E.or_(*(E.eq(x, t) for t in terms)))
