"""Exhaustive reference scheduler for small loops.

Shares no code with the constraint encoder. For a fixed II it enumerates
every (slot, cycle mod II) choice per operation, then decides the remaining
freedom exactly: the stage offsets ``k`` (cycle = residue + II*k) form a
system of difference constraints solved with Bellman-Ford, and the routing
choices are searched per modulo cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .loop import LoopGraph, Operation
from .machine import Processor, routing_options, slots_for
from .schedule import ModuloSchedule, Placement, Route

MAX_ORACLE_OPS = 7


@dataclass(frozen=True)
class OracleLimits:
    max_ops: int = MAX_ORACLE_OPS
    max_ii: int | None = None


def _reads(p: Processor, op: Operation, slot: str, reg: str) -> set[str]:
    rfs = p.info(op.opcode).operand_rfs[slot]
    return {rfs[i] for i, r in enumerate(op.uses) if r == reg}


def _stage_offsets(g: LoopGraph, ii: int, residue: dict[str, int], ops: list[str],
                   max_cycle: int | None) -> dict[str, int] | None:
    """Integer k per op with all constraints among ``ops`` satisfied, or None."""
    idx = {o: i for i, o in enumerate(ops)}
    zero = len(ops)
    edges = []  # (u, v, w) meaning x_v - x_u <= w
    for d in g.deps:
        if d.src not in idx or d.dst not in idx:
            continue
        w = math.ceil((d.latency - d.distance * ii + residue[d.src] - residue[d.dst]) / ii)
        edges.append((idx[d.dst], idx[d.src], -w))  # k_src - k_dst <= -w
    for o in ops:
        i = idx[o]
        edges.append((i, zero, 0))  # k_o >= 0
        pin = g.op(o).pinned_cycle
        if pin is not None:
            edges.append((zero, i, pin // ii))
            edges.append((i, zero, -(pin // ii)))
        if max_cycle is not None:
            edges.append((zero, i, (max_cycle - residue[o]) // ii))
    dist = [0] * (zero + 1)
    for _ in range(zero + 1):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            return {o: dist[idx[o]] - dist[zero] for o in ops}
    return None


def _route(g: LoopGraph, p: Processor, ii: int, slot: dict[str, str], residue: dict[str, int],
           offset: dict[str, int]) -> dict[tuple[str, str], tuple[str, str, str]] | None:
    """Pick (port, bus, write port) per (producer, rf) without modulo clashes."""
    demands: dict[tuple[str, str], tuple[str, int]] = {}
    for d in g.deps:
        if d.kind != "data":
            continue
        src, dst = g.op(d.src), g.op(d.dst)
        regs = set(src.defs) & set(dst.uses)
        port = p.out_port(src.opcode, slot[src.id])
        mc = (residue[src.id] + offset[src.id]) % ii
        for reg in regs:
            for rf in _reads(p, dst, slot[dst.id], reg):
                demands[(src.id, rf)] = (port, mc)
    order = sorted(demands, key=lambda k: len(routing_options(p, demands[k][0], k[1])))
    bus_owner: dict[tuple[str, int], str] = {}
    wp_owner: dict[tuple[str, int], str] = {}
    chosen: dict[tuple[str, str], tuple[str, str, str]] = {}

    def go(i: int) -> bool:
        if i == len(order):
            return True
        key = order[i]
        port, mc = demands[key]
        for bus, wp in routing_options(p, port, key[1]):
            b_prev = bus_owner.get((bus, mc))
            w_prev = wp_owner.get((wp, mc))
            if b_prev not in (None, port) or w_prev not in (None, bus):
                continue
            if b_prev is None:
                bus_owner[(bus, mc)] = port
            if w_prev is None:
                wp_owner[(wp, mc)] = bus
            chosen[key] = (port, bus, wp)
            if go(i + 1):
                return True
            del chosen[key]
            if b_prev is None:
                del bus_owner[(bus, mc)]
            if w_prev is None:
                del wp_owner[(wp, mc)]
        return False

    return dict(chosen) if go(0) else None


def _pressure_ok(g: LoopGraph, p: Processor, ii: int, slot: dict[str, str], residue: dict[str, int]) -> bool:
    for rf in p.register_files:
        counts = [0] * ii
        for v in g.virtual_registers:
            d = g.definer(v)
            start = residue[d.id] if d is not None else 0
            reads = [residue[u.id] for u in g.users(v) if rf.id in _reads(p, u, slot[u.id], v)]
            early = [m for m in reads if m <= start]
            if early:
                end = max(early)
                for c in range(ii):
                    counts[c] += c <= end or c >= start
            else:
                end = max(reads, default=-1)
                out = rf.id in g.live_out.get(v, ())
                for c in range(ii):
                    counts[c] += c >= start and (c <= end or out)
        if max(counts) > rf.capacity:
            return False
    return True


def feasible(g: LoopGraph, p: Processor, ii: int, num_stages: int | None = None,
             writeback_offset: str = "0", register_pressure: bool = False) -> ModuloSchedule | None:
    """A legal schedule at ``ii`` (within ``num_stages`` stages if given), or None."""
    ops = [o.id for o in g.operations]
    max_cycle = ii * num_stages - 1 if num_stages is not None else None
    offset = {o.id: (p.latency(o.opcode) if writeback_offset == "latency" else 0) for o in g.operations}
    choices = {}
    for o in g.operations:
        slots = [o.pinned_slot] if o.pinned_slot else slots_for(p, o.opcode)
        res = [o.pinned_cycle % ii] if o.pinned_cycle is not None else list(range(ii))
        choices[o.id] = [(s, r) for r in res for s in slots]
    if num_stages is None and not any(o.pinned_cycle is not None for o in g.operations):
        # without a cycle cap any shift of a schedule is legal, so fix one residue
        first = ops[0]
        choices[first] = [(s, r) for s, r in choices[first] if r == 0]
    order = sorted(ops, key=lambda o: len(choices[o]))
    slot: dict[str, str] = {}
    residue: dict[str, int] = {}
    busy: set[tuple[str, int]] = set()

    def leaf() -> ModuloSchedule | None:
        k = _stage_offsets(g, ii, residue, ops, max_cycle)
        if k is None:
            return None
        if register_pressure and not _pressure_ok(g, p, ii, slot, residue):
            return None
        routes = _route(g, p, ii, slot, residue, offset)
        if routes is None:
            return None
        placement = {o: Placement(residue[o] + ii * k[o], slot[o]) for o in ops}
        routing = tuple(sorted(
            (Route(src, placement[src].cycle + offset[src], port, bus, wp, rf)
             for (src, rf), (port, bus, wp) in routes.items()),
            key=lambda r: (r.cycle, r.producer, r.rf)))
        span = max(pl.cycle for pl in placement.values()) + 1
        return ModuloSchedule(ii, math.ceil(span / ii), placement, routing, writeback_offset)

    def go(i: int) -> ModuloSchedule | None:
        if i == len(order):
            return leaf()
        o = order[i]
        for s, r in choices[o]:
            if (s, r) in busy:
                continue
            busy.add((s, r))
            slot[o], residue[o] = s, r
            # prune on the dependency subsystem among the ops placed so far
            if _stage_offsets(g, ii, residue, order[: i + 1], max_cycle) is not None:
                found = go(i + 1)
                if found is not None:
                    return found
            busy.discard((s, r))
            del slot[o], residue[o]
        return None

    return go(0)


def brute_force_min_ii(g: LoopGraph, p: Processor, limits: OracleLimits = OracleLimits(),
                       num_stages: int | None = None, writeback_offset: str = "0",
                       register_pressure: bool = False) -> int | None:
    """Smallest II admitting a legal schedule, or None if none exists up to ``limits.max_ii``."""
    if len(g.operations) > limits.max_ops:
        raise ValueError(f"oracle limited to {limits.max_ops} operations, loop has {len(g.operations)}")
    hi = limits.max_ii or sum(p.latency(o.opcode) for o in g.operations) + len(g.operations)
    for ii in range(1, hi + 1):
        if feasible(g, p, ii, num_stages, writeback_offset, register_pressure) is not None:
            return ii
    return None
