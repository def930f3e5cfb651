"""Iterative modulo scheduling: a greedy place-and-evict heuristic used as a yardstick."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bounds import mii
from .encoder import read_rfs, route_offset
from .errors import InfeasibleError
from .loop import LoopGraph, augment_loop_carried
from .machine import Processor, routing_options, slots_for
from .schedule import ModuloSchedule, Placement, Route, check_schedule


@dataclass(frozen=True)
class HeuristicOptions:
    max_ii: int | None = None
    budget_ratio: int = 6  # placement attempts per operation and II
    writeback_offset: str = "0"


@dataclass
class HeuristicResult:
    schedule: ModuloSchedule | None
    achieved_ii: int | None
    attempts: int


def _heights(g: LoopGraph, ii: int) -> dict[str, int]:
    """Longest path to any sink with edge weight ``latency - distance * II``."""
    h = {o: 0 for o in g.op_ids}
    for _ in range(len(h)):
        changed = False
        for d in g.deps:
            cand = h[d.dst] + d.latency - d.distance * ii
            if cand > h[d.src]:
                h[d.src] = cand
                changed = True
        if not changed:
            break
    return h


class _Attempt:
    """Mutable partial schedule at one II."""

    def __init__(self, g: LoopGraph, p: Processor, ii: int, offset: str):
        self.g, self.p, self.ii, self.offset = g, p, ii, offset
        self.at: dict[str, Placement] = {}
        self.slot_owner: dict[tuple[str, int], str] = {}
        # route book-keeping: (producer, rf) -> Route, plus per-modulo-cycle owners
        self.routes: dict[tuple[str, str], Route] = {}
        self.bus_owner: dict[tuple[str, int], str] = {}
        self.wp_owner: dict[tuple[str, int], str] = {}
        self.bus_users: dict[tuple[str, int], set[tuple[str, str]]] = {}
        self.wp_users: dict[tuple[str, int], set[tuple[str, str]]] = {}

    def estart(self, op: str) -> int:
        t = 0
        for d in self.g.deps:
            if d.dst == op and d.src in self.at and d.src != op:
                t = max(t, self.at[d.src].cycle + d.latency - d.distance * self.ii)
        return t

    def flows(self, op: str, cycle: int, slot: str) -> list[tuple[str, str, int, str]]:
        """(producer, port, route cycle, rf) needed if ``op`` sits at (cycle, slot)."""
        out = []
        g, p = self.g, self.p
        for d in g.data_deps():
            reg = g.dep_register(d)
            if op not in (d.src, d.dst):
                continue
            other = d.dst if d.src == op else d.src
            if other != op and other not in self.at:
                continue
            src = g.op(d.src)
            pcyc, pslot = (cycle, slot) if d.src == op else (self.at[d.src].cycle, self.at[d.src].slot)
            dst_slot = slot if d.dst == op else self.at[d.dst].slot
            dst = g.op(d.dst)
            for rf in read_rfs(p, dst, dst_slot, reg):
                if (src.id, rf) in self.routes:
                    continue
                port = p.out_port(src.opcode, pslot)
                out.append((src.id, port, pcyc + route_offset(p, src, self.offset), rf))
        return list(dict.fromkeys(out))

    def pick_routes(self, needed) -> list[Route] | None:
        """First free (bus, write port) per flow, or None if some flow cannot be routed."""
        taken_bus: dict[tuple[str, int], str] = {}
        taken_wp: dict[tuple[str, int], str] = {}
        chosen = []
        for producer, port, cyc, rf in needed:
            mc = cyc % self.ii
            for bus, wp in routing_options(self.p, port, rf):
                b = taken_bus.get((bus, mc), self.bus_owner.get((bus, mc)))
                w = taken_wp.get((wp, mc), self.wp_owner.get((wp, mc)))
                if b in (None, port) and w in (None, bus):
                    taken_bus[(bus, mc)], taken_wp[(wp, mc)] = port, bus
                    chosen.append(Route(producer, cyc, port, bus, wp, rf))
                    break
            else:
                return None
        return chosen

    def place(self, op: str, cycle: int, slot: str, routes: list[Route]) -> None:
        self.at[op] = Placement(cycle, slot)
        self.slot_owner[(slot, cycle % self.ii)] = op
        for r in routes:
            mc = r.cycle % self.ii
            key = (r.producer, r.rf)
            self.routes[key] = r
            self.bus_owner[(r.bus, mc)] = r.out_port
            self.wp_owner[(r.write_port, mc)] = r.bus
            self.bus_users.setdefault((r.bus, mc), set()).add(key)
            self.wp_users.setdefault((r.write_port, mc), set()).add(key)

    def unplace(self, op: str) -> None:
        pl = self.at.pop(op)
        del self.slot_owner[(pl.slot, pl.cycle % self.ii)]
        # drop routes produced by op and routes carrying values into op's reads
        for key in [k for k in self.routes if k[0] == op or self._feeds_only(k, op)]:
            self._drop_route(key)

    def _feeds_only(self, key: tuple[str, str], op: str) -> bool:
        """True if the route ``key`` now serves no placed consumer."""
        producer, rf = key
        g = self.g
        for d in g.data_deps():
            if d.src != producer or d.dst == op or d.dst not in self.at:
                continue
            if rf in read_rfs(self.p, g.op(d.dst), self.at[d.dst].slot, g.dep_register(d)):
                return False
        return True

    def _drop_route(self, key: tuple[str, str]) -> None:
        r = self.routes.pop(key)
        mc = r.cycle % self.ii
        users = self.bus_users[(r.bus, mc)]
        users.discard(key)
        if not users:
            del self.bus_owner[(r.bus, mc)]
        users = self.wp_users[(r.write_port, mc)]
        users.discard(key)
        if not users:
            del self.wp_owner[(r.write_port, mc)]

    def route_blockers(self, needed) -> set[str]:
        """Ops whose routes occupy the first option of each unroutable flow."""
        blockers = set()
        for _producer, port, cyc, rf in needed:
            mc = cyc % self.ii
            for bus, wp in routing_options(self.p, port, rf)[:1]:
                for key in self.bus_users.get((bus, mc), set()) | self.wp_users.get((wp, mc), set()):
                    blockers.add(key[0])
                    blockers.update(self._consumers(key))
        return blockers

    def _consumers(self, key: tuple[str, str]) -> set[str]:
        producer, rf = key
        g = self.g
        return {d.dst for d in g.data_deps() if d.src == producer and d.dst in self.at
                and rf in read_rfs(self.p, g.op(d.dst), self.at[d.dst].slot, g.dep_register(d))}


def _try_ii(g: LoopGraph, p: Processor, ii: int, budget: int, offset: str) -> tuple[ModuloSchedule | None, int]:
    height = _heights(g, ii)
    order = {o: i for i, o in enumerate(sorted(g.op_ids, key=lambda o: (-height[o], g.op_ids.index(o))))}
    st = _Attempt(g, p, ii, offset)
    last: dict[str, int] = {}
    attempts = 0
    while len(st.at) < len(g.operations):
        if attempts >= budget:
            return None, attempts
        attempts += 1
        op = min((o for o in g.op_ids if o not in st.at), key=order.__getitem__)
        o = g.op(op)
        lo = st.estart(op)
        if o.pinned_cycle is not None:
            window = [o.pinned_cycle]
        else:
            window = list(range(lo, lo + ii))
        slots = [o.pinned_slot] if o.pinned_slot else slots_for(p, o.opcode)
        placed = False
        for t in window:
            for s in slots:
                if (s, t % ii) in st.slot_owner:
                    continue
                routes = st.pick_routes(st.flows(op, t, s))
                if routes is not None:
                    st.place(op, t, s, routes)
                    placed = True
                    break
            if placed:
                break
        if not placed:
            # force a placement and evict whatever is in the way
            if o.pinned_cycle is not None:
                t = o.pinned_cycle
            else:
                t = max(lo, last[op] + 1) if op in last else lo
            s = slots[attempts % len(slots)]
            owner = st.slot_owner.get((s, t % ii))
            if owner is not None:
                st.unplace(owner)
            needed = st.flows(op, t, s)
            routes = st.pick_routes(needed)
            if routes is None:
                for victim in st.route_blockers(needed) - {op}:
                    if victim in st.at:
                        st.unplace(victim)
                needed = st.flows(op, t, s)
                routes = st.pick_routes(needed)
                if routes is None:
                    # evict every neighbour that needs routing and retry with a clean slate
                    for victim in {d.src for d in g.deps if d.dst == op} | {d.dst for d in g.deps if d.src == op}:
                        if victim in st.at and victim != op:
                            st.unplace(victim)
                    routes = st.pick_routes(st.flows(op, t, s)) or []
            st.place(op, t, s, routes)
        last[op] = st.at[op].cycle
        # evict ops whose dependencies the new placement breaks
        for d in g.deps:
            if d.src == op and d.dst in st.at and d.dst != op:
                if st.at[d.dst].cycle < st.at[op].cycle + d.latency - d.distance * ii:
                    st.unplace(d.dst)
            if d.dst == op and d.src in st.at and d.src != op:
                if st.at[op].cycle < st.at[d.src].cycle + d.latency - d.distance * ii:
                    st.unplace(d.src)
    base = min(pl.cycle for pl in st.at.values())
    shift = 0 if any(op.pinned_cycle is not None for op in g.operations) else (base // ii) * ii
    placement = {op: Placement(pl.cycle - shift, pl.slot) for op, pl in st.at.items()}
    routing = tuple(sorted((Route(r.producer, r.cycle - shift, r.out_port, r.bus, r.write_port, r.rf)
                            for r in st.routes.values()), key=lambda r: (r.cycle, r.producer, r.rf)))
    span = max(pl.cycle for pl in placement.values()) + 1
    s = ModuloSchedule(ii, math.ceil(span / ii), placement, routing, offset)
    return (s if not check_schedule(s, g, p) else None), attempts


def ims_schedule(g: LoopGraph, p: Processor, opts: HeuristicOptions = HeuristicOptions()) -> HeuristicResult:
    """Try II = MII, MII+1, ... with a bounded number of placements per II."""
    g = augment_loop_carried(g)
    try:
        lower = mii(g, p)
    except InfeasibleError:
        return HeuristicResult(None, None, 0)
    hi = opts.max_ii or sum(p.latency(o.opcode) for o in g.operations) + len(g.operations)
    total = 0
    for ii in range(lower, hi + 1):
        s, used = _try_ii(g, p, ii, opts.budget_ratio * len(g.operations), opts.writeback_offset)
        total += used
        if s is not None:
            return HeuristicResult(s, ii, total)
    return HeuristicResult(None, None, total)
