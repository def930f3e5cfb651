"""Turn an unsatisfiable core into findings a machine designer can act on."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any

from .encoder import Problem

CATEGORIES = (
    "slot_contention",
    "port_contention",
    "bus_contention",
    "dependency_cycle",
    "cycle_range",
    "routing_gap",
    "register_pressure",
    "residual",
)


@dataclass
class Finding:
    category: str
    message: str
    entities: dict[str, Any] = field(default_factory=dict)
    labels: list[str] = field(default_factory=list)


@dataclass
class Diagnosis:
    ii: int
    stages: int
    findings: list[Finding]
    core: list[str]

    @property
    def categories(self) -> list[str]:
        return [f.category for f in self.findings]

    def to_doc(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> Diagnosis:
        return cls(doc["ii"], doc["stages"], [Finding(**f) for f in doc["findings"]], list(doc["core"]))


def _names(xs) -> str:
    return ", ".join(sorted(set(xs)))


def _find_cycle(edges: dict[str, list[tuple[str, str]]]) -> list[str] | None:
    """Labels along some directed cycle of ``src -> [(dst, label)]``, or None."""
    color: dict[str, int] = {}
    path: list[str] = []
    labels: list[str] = []

    def dfs(u: str) -> list[str] | None:
        color[u] = 1
        path.append(u)
        for v, label in edges.get(u, []):
            labels.append(label)
            if color.get(v) == 1:
                return labels[path.index(v):]
            if v not in color:
                found = dfs(v)
                if found:
                    return found
            labels.pop()
        color[u] = 2
        path.pop()
        return None

    for u in sorted(edges):
        if u not in color:
            found = dfs(u)
            if found:
                return found
    return None


def _chain_length(deps: list[dict[str, Any]], ii: int) -> tuple[int, list[str]]:
    """Longest issue-to-issue separation forced by acyclic ``deps``, and its op path."""
    succ: dict[str, list[tuple[str, int]]] = defaultdict(list)
    nodes = set()
    for d in deps:
        succ[d["src"]].append((d["dst"], d["latency"] - d["distance"] * ii))
        nodes |= {d["src"], d["dst"]}
    best: dict[str, tuple[int, list[str]]] = {}

    def longest(u: str) -> tuple[int, list[str]]:
        if u not in best:
            best[u] = (0, [u])
            cand = [(w + longest(v)[0], [u] + longest(v)[1]) for v, w in succ[u]]
            best[u] = max(cand, default=(0, [u]))
        return best[u]

    return max((longest(n) for n in sorted(nodes)), default=(0, []))


def explain_core(core: list[str], pr: Problem) -> Diagnosis:
    """Group the labels of an unsat core into categorised findings.

    The grouping is syntactic: it reads the family and entities each label was
    created with, it does not re-solve anything.
    """
    if not core:
        raise ValueError("an unsatisfiable core cannot be empty")
    info = pr.label_info
    by_family: dict[str, list[str]] = defaultdict(list)
    for label in core:
        by_family[info[label].family if label in info else "?"].append(label)
    findings: list[Finding] = []
    used: set[str] = set()

    def ents(label: str) -> dict[str, Any]:
        return info[label].entities

    # dependencies: cycles first, then whatever chain fights the cycle range
    deps = by_family.get("c4", [])
    graph: dict[str, list[tuple[str, str]]] = defaultdict(list)
    for label in deps:
        graph[ents(label)["src"]].append((ents(label)["dst"], label))
    loop = _find_cycle(graph)
    if loop:
        d = [ents(lbl) for lbl in loop]
        lat = sum(x["latency"] for x in d)
        dist = sum(x["distance"] for x in d)
        ops = [x["src"] for x in d]
        need = math.ceil(lat / dist) if dist else None
        msg = f"recurrence {' -> '.join(ops + [ops[0]])} has latency {lat} over distance {dist}"
        if need is None:
            msg += ", with zero distance it can never be met"
        elif need > pr.ii:
            msg += f", needs II >= {need} but II={pr.ii}"
        else:
            msg += f", which fixes how far apart its operations may issue at II={pr.ii}"
        findings.append(Finding("dependency_cycle", msg, {"ops": ops, "latency": lat, "distance": dist}, loop))
        used.update(loop)

    ranged = by_family.get("c1", [])
    chain = [lbl for lbl in deps if lbl not in used]
    if ranged or chain:
        ranged = ranged + [lbl for lbl in by_family.get("pin", []) if "cycle" in ents(lbl)]
    if ranged or (chain and not loop):
        length, path = _chain_length([ents(lbl) for lbl in chain], pr.ii)
        avail = pr.max_cycle + 1
        if path and len(path) > 1 and length + 1 > avail:
            msg = (f"dependency chain {' -> '.join(path)} needs {length + 1} cycles but only {avail} "
                   f"(0..{pr.max_cycle}) fit in {pr.num_stages} stages at II={pr.ii}")
        elif path and len(path) > 1:
            msg = (f"dependency chain {' -> '.join(path)} spans {length + 1} of the {avail} cycles "
                   f"available in {pr.num_stages} stages, leaving no room to stagger other operations")
        else:
            ops = [ents(lbl)["op"] for lbl in ranged]
            msg = f"{_names(ops)} cannot be placed within cycles 0..{pr.max_cycle}"
        labels = ranged + chain
        findings.append(Finding("cycle_range", msg, {
            "ops": path or sorted({ents(lbl)["op"] for lbl in ranged}),
            "needed": length + 1, "available": avail, "max_cycle": pr.max_cycle,
        }, labels))
        used.update(labels)

    # issue slots
    c3 = by_family.get("c3", [])
    if c3:
        slots = sorted({ents(lbl)["slot"] for lbl in c3})
        ops = sorted({o for lbl in c3 for o in ents(lbl)["ops"]})
        c2 = [lbl for lbl in by_family.get("c2", []) if ents(lbl)["op"] in ops]
        pins = [lbl for lbl in by_family.get("pin", []) if lbl not in used and ents(lbl)["op"] in ops]
        capacity = len(slots) * pr.ii
        if len(ops) > capacity:
            msg = (f"{len(ops)} operations ({_names(ops)}) need issue slots {_names(slots)}, "
                   f"which offer only {capacity} slot-cycles at II={pr.ii}")
        else:
            msg = f"{_names(ops)} cannot share issue slots {_names(slots)} in the same modulo cycle"
        findings.append(Finding("slot_contention", msg, {"slots": slots, "ops": ops, "ii": pr.ii},
                                c3 + c2 + pins))
        used.update(c3 + c2 + pins)

    # routing: write ports, then buses
    c5 = [lbl for lbl in by_family.get("c5", []) if not lbl.endswith("/noroute")]
    noroute = [lbl for lbl in by_family.get("c5", []) if lbl.endswith("/noroute")]
    c7_by_rf: dict[str, list[str]] = defaultdict(list)
    for lbl in by_family.get("c7", []):
        c7_by_rf[ents(lbl)["rf"]].append(lbl)
    for rf, labels in sorted(c7_by_rf.items()):
        wps = sorted({ents(lbl)["wp"] for lbl in labels})
        flows = [lbl for lbl in c5 if ents(lbl)["rf"] == rf and lbl not in used]
        producers = sorted({ents(lbl)["src"] for lbl in flows})
        mcs = sorted({ents(lbl)["mc"] for lbl in labels})
        msg = (f"{rf} write port{'s' if len(wps) > 1 else ''} {_names(wps)} cannot accept every value written in modulo cycle(s) "
               f"{', '.join(map(str, mcs))} at II={pr.ii}" + (f" (producers {_names(producers)})" if producers else ""))
        findings.append(Finding("port_contention", msg,
                                {"rf": rf, "write_ports": wps, "producers": producers, "mc": mcs},
                                labels + flows))
        used.update(labels + flows)

    c6 = by_family.get("c6", [])
    if c6:
        buses = sorted({ents(lbl)["bus"] for lbl in c6})
        flows = [lbl for lbl in c5 if lbl not in used]
        producers = sorted({ents(lbl)["src"] for lbl in flows})
        ports = sorted({p for lbl in c6 for p in ents(lbl)["ports"]})
        mcs = sorted({ents(lbl)["mc"] for lbl in c6})
        msg = (f"buses {_names(buses)} cannot carry every value in modulo cycle(s) {', '.join(map(str, mcs))}"
               + (f" (producers {_names(producers)})" if producers else f" (ports {_names(ports)})"))
        findings.append(Finding("bus_contention", msg,
                                {"buses": buses, "ports": ports, "producers": producers, "mc": mcs},
                                c6 + flows))
        used.update(c6 + flows)

    rest_c5 = [lbl for lbl in c5 if lbl not in used]
    if noroute or rest_c5:
        gaps = sorted({(ents(lbl)["port"], ents(lbl)["rf"]) for lbl in noroute})
        if gaps:
            msg = "no bus path from " + "; ".join(f"{port} to {rf}" for port, rf in gaps)
        else:
            msg = "values " + _names(ents(lbl)["reg"] for lbl in rest_c5) + " cannot be routed to their register files"
        findings.append(Finding("routing_gap", msg, {
            "paths": [list(x) for x in gaps],
            "ops": sorted({ents(lbl)["src"] for lbl in noroute + rest_c5} | {ents(lbl)["dst"] for lbl in noroute + rest_c5}),
        }, noroute + rest_c5))
        used.update(noroute + rest_c5)

    # register pressure
    r7 = by_family.get("r7", [])
    rp = [lbl for fam in ("r1", "r2", "r3", "r4", "r5", "r6") for lbl in by_family.get(fam, [])]
    for rf in sorted({ents(lbl)["rf"] for lbl in r7}):
        limits = [lbl for lbl in r7 if ents(lbl)["rf"] == rf]
        cap = ents(limits[0])["capacity"]
        mine = [lbl for lbl in rp if ents(lbl).get("rf") == rf or (lbl.startswith("r1/") and lbl not in used)]
        regs = sorted({ents(lbl)["reg"] for lbl in mine if "reg" in ents(lbl)})
        cycles = sorted({ents(lbl)["c"] for lbl in limits})
        msg = (f"{rf} holds only {cap} registers but {len(regs)} values ({_names(regs)}) are live together "
               f"at modulo cycle(s) {', '.join(map(str, cycles))}")
        findings.append(Finding("register_pressure", msg,
                                {"rf": rf, "capacity": cap, "registers": regs, "cycles": cycles},
                                limits + mine))
        used.update(limits + mine)

    # slot choices and the rest attach to the most plausible finding, or stay residual
    leftover = [lbl for lbl in core if lbl not in used]
    if leftover:
        c2 = [lbl for lbl in leftover if lbl in by_family.get("c2", [])]
        others = [lbl for lbl in leftover if lbl not in c2]
        if c2 and findings:
            host = next((f for f in findings if f.category != "dependency_cycle"), findings[0])
            host.labels.extend(c2)
        else:
            others = c2 + others
        if others:
            msg = "other constraints: " + "; ".join(info[lbl].text if lbl in info else lbl for lbl in others)
            findings.append(Finding("residual", msg, {}, others))
    return Diagnosis(pr.ii, pr.num_stages, findings, list(core))


def render(d: Diagnosis, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(d.to_doc(), indent=2, sort_keys=True)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    n = len(d.core)
    lines = [f"infeasible at II={d.ii} with {d.stages} stages ({n} constraint{'s' if n != 1 else ''} in the core)"]
    for f in d.findings:
        lines.append(f"  [{f.category}] {f.message}")
    return "\n".join(lines)
