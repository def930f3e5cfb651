"""Lower bounds on the initiation interval and bounds on the stage count."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, InfeasibleError
from .loop import LoopGraph
from .machine import Processor, slots_for

# Above this many candidate IIs the recurrence bound switches from a scan to bisection.
LINEAR_SCAN_LIMIT = 64


@dataclass(frozen=True)
class StageBounds:
    min_stages: int
    max_stages: int
    longest_path: int  # L: critical path over distance-0 edges, +1 for the last issue cycle
    max_separation: int  # d*: largest finite shortest path in the M graph


def res_mii(g: LoopGraph, p: Processor) -> int:
    """Resource bound: worst ceil(ops / slots) over connected op-slot legality classes."""
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for o in g.operations:
        legal = [o.pinned_slot] if o.pinned_slot else slots_for(p, o.opcode)
        for s in legal:
            parent[find("op:" + o.id)] = find("slot:" + s)
    ops: dict[str, int] = {}
    slots: dict[str, int] = {}
    for key in list(parent):
        root = find(key)
        if key.startswith("op:"):
            ops[root] = ops.get(root, 0) + 1
        else:
            slots[root] = slots.get(root, 0) + 1
    return max([1] + [math.ceil(n / slots[root]) for root, n in ops.items()])


def _has_positive_cycle(g: LoopGraph, ii: int) -> bool:
    """Bellman-Ford longest-path relaxation on weights ``latency - distance * ii``."""
    index = {oid: i for i, oid in enumerate(g.op_ids)}
    edges = [(index[d.src], index[d.dst], d.latency - d.distance * ii) for d in g.deps]
    dist = [0] * len(index)
    for _ in range(len(index)):
        changed = False
        for u, v, w in edges:
            if dist[u] + w > dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            return False
    return True


def rec_mii(g: LoopGraph) -> int:
    """Smallest II for which no dependence cycle has positive total ``l - d*II``.

    Raises :class:`InfeasibleError` when a cycle with zero total distance has
    positive total latency, since no II can satisfy it.
    """
    upper = max(1, sum(max(d.latency, 0) for d in g.deps))
    if _has_positive_cycle(g, upper + 1):
        raise InfeasibleError("non-positive distance cycle: a dependence cycle with zero total distance has positive latency")
    if not _has_positive_cycle(g, 1):
        return 1
    # feasibility is monotone in II, so both strategies find the same answer
    if upper <= LINEAR_SCAN_LIMIT:
        for ii in range(2, upper + 2):
            if not _has_positive_cycle(g, ii):
                return ii
    lo, hi = 1, upper + 1  # infeasible at lo, feasible at hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _has_positive_cycle(g, mid):
            lo = mid
        else:
            hi = mid
    return hi


def mii(g: LoopGraph, p: Processor) -> int:
    return max(res_mii(g, p), rec_mii(g))


def all_pairs_shortest(n: int, edges: list[tuple[int, int, int]]) -> np.ndarray:
    """Floyd-Warshall over a dense matrix; ``inf`` marks unreachable pairs."""
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u, v, w in edges:
        if w < dist[u, v]:
            dist[u, v] = w
    for k in range(n):
        dist = np.minimum(dist, dist[:, k, None] + dist[None, k, :])
    return dist


def separation_graph(g: LoopGraph, ii: int) -> list[tuple[int, int, int]]:
    """M graph: an edge dst -> src of weight ``d*II - l`` per dependency src -> dst.

    The shortest path from x to y bounds ``Cycle(y) - Cycle(x)`` in any legal schedule.
    """
    index = {oid: i for i, oid in enumerate(g.op_ids)}
    return [(index[d.dst], index[d.src], d.distance * ii - d.latency) for d in g.deps]


def longest_path(g: LoopGraph) -> int:
    """Critical path in cycles over distance-0 edges, counting the final op's issue cycle."""
    index = {oid: i for i, oid in enumerate(g.op_ids)}
    edges = [(index[d.src], index[d.dst], d.latency) for d in g.deps if d.distance == 0]
    dist = [0] * len(index)
    for _ in range(len(index)):
        changed = False
        for u, v, w in edges:
            if dist[u] + w > dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            break
    else:
        raise InfeasibleError("positive-latency cycle among distance-0 dependencies")
    return max(dist) + 1


def stage_bounds(g: LoopGraph, ii: int, max_stages: int | None = None) -> StageBounds:
    """Lower and upper bound on the stage count at ``ii``.

    The upper bound is ``ceil((d* + 1) / ii)``: ``d*`` bounds the cycle
    separation of two operations, so a schedule spans at most ``d* + 1``
    cycles. ``max_stages`` replaces the derived upper bound; it is required
    when some pair of operations has no path in the M graph.
    """
    if ii < 1:
        raise ValueError("ii must be >= 1")
    length = longest_path(g)
    min_stages = max(1, math.ceil(length / ii))
    n = len(g.operations)
    dist = all_pairs_shortest(n, separation_graph(g, ii))
    if np.any(np.diag(dist) < 0):
        raise BoundsError(f"negative cycle in M: infeasible at II={ii}")
    finite = np.isfinite(dist)
    if max_stages is not None:
        sep = int(dist[finite].max())
        return StageBounds(min_stages, max(min_stages, max_stages), length, sep)
    if not finite.all():
        raise BoundsError(
            "disconnected dependency graph: some operation pairs have unbounded separation; supply max_stages"
        )
    sep = int(dist.max())
    return StageBounds(min_stages, max(min_stages, math.ceil((sep + 1) / ii)), length, sep)
