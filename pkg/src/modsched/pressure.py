"""Register pressure of a concrete schedule, computed directly from cycles and slots."""

from __future__ import annotations

from .encoder import read_rfs
from .loop import LoopGraph
from .machine import Processor
from .schedule import ModuloSchedule


def live_matrix(s: ModuloSchedule, g: LoopGraph, p: Processor,
                rfs: list[str] | None = None) -> dict[tuple[str, str, int], bool]:
    """``(rf, reg, c) -> live`` for every kernel cycle ``c`` in ``0..II-1``."""
    ii = s.ii
    rfs = rfs if rfs is not None else [rf.id for rf in p.register_files]
    live: dict[tuple[str, str, int], bool] = {}
    for v in g.virtual_registers:
        d = g.definer(v)
        start = s.placement[d.id].cycle % ii if d is not None else 0
        for rf in rfs:
            reads = [s.placement[u.id].cycle % ii for u in g.users(v)
                     if rf in read_rfs(p, u, s.placement[u.id].slot, v)]
            before = [m for m in reads if m <= start]
            ubd = bool(reads) and min(reads) <= start
            end = max(before) if ubd else max(reads, default=-1)
            live_out = rf in g.live_out.get(v, ())
            for c in range(ii):
                if ubd:
                    live[(rf, v, c)] = c <= end or start <= c
                else:
                    live[(rf, v, c)] = start <= c and (c <= end or live_out)
    return live


def pressure_profile(s: ModuloSchedule, g: LoopGraph, p: Processor) -> dict[str, list[int]]:
    """Number of live registers per register file at each kernel cycle."""
    live = live_matrix(s, g, p)
    prof = {rf.id: [0] * s.ii for rf in p.register_files}
    for (rf, _v, c), on in live.items():
        prof[rf][c] += on
    return prof


def measure_pressure(s: ModuloSchedule, g: LoopGraph, p: Processor) -> dict[str, int]:
    """Peak live-register count per register file."""
    return {rf: max(counts) for rf, counts in pressure_profile(s, g, p).items()}


def over_capacity(s: ModuloSchedule, g: LoopGraph, p: Processor) -> list[str]:
    peak = measure_pressure(s, g, p)
    return sorted(rf.id for rf in p.register_files if peak[rf.id] > rf.capacity)
