"""Iterative search for the smallest feasible II and stage count."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .bounds import StageBounds, mii, stage_bounds
from .encoder import ENCODINGS, WRITEBACK_OFFSETS, Problem, encode_core, encode_register_pressure
from .errors import BackendError, BoundsError, InfeasibleError, InputError
from .loop import LoopGraph, augment_loop_carried, validate
from .machine import Processor
from .pressure import measure_pressure
from .schedule import ModuloSchedule, check_schedule, decode_schedule
from . import solver
from .solver import UNLIMITED, Backend, Budget, check_session, open_session, solve_incremental, validate_core

log = logging.getLogger(__name__)

RP_MODES = ("lazy", "eager", "off")
FOUND, INFEASIBLE, GAVE_UP = "found", "infeasible", "gave_up"


@dataclass(frozen=True)
class SearchOptions:
    max_ii: int | None = None
    stages: int | None = None
    max_stages: int | None = None
    rp_mode: str = "lazy"
    budget: Budget = UNLIMITED
    want_core: bool = False
    encoding: str = "compact"
    writeback_offset: str = "0"
    on_unknown: str = "skip"  # or "abort"
    backend: Backend | None = None

    def __post_init__(self):
        if self.rp_mode not in RP_MODES:
            raise ValueError(f"rp_mode must be one of {RP_MODES}")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}")
        if self.writeback_offset not in WRITEBACK_OFFSETS:
            raise ValueError(f"writeback_offset must be one of {WRITEBACK_OFFSETS}")
        if self.on_unknown not in ("skip", "abort"):
            raise ValueError("on_unknown must be 'skip' or 'abort'")
        for name in ("max_ii", "stages", "max_stages"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class Probe:
    ii: int
    stages: int
    status: str
    rp_round: int
    solve_stats: dict[str, Any]

    def to_doc(self) -> dict[str, Any]:
        return {"ii": self.ii, "stages": self.stages, "status": self.status,
                "rp_round": self.rp_round, "solve_stats": self.solve_stats}


@dataclass
class SearchReport:
    status: str
    schedule: ModuloSchedule | None = None
    mii: int | None = None
    reason: str = ""
    cores: dict[tuple[int, int], list[str]] = field(default_factory=dict)
    problems: dict[tuple[int, int], Problem] = field(default_factory=dict)
    trace: list[Probe] = field(default_factory=list)
    pressure: dict[str, int] = field(default_factory=dict)
    rp_files: dict[int, list[str]] = field(default_factory=dict)
    unknown_probes: int = 0
    invariant_inputs: list[str] = field(default_factory=list)  # registers read but never defined

    @property
    def found(self) -> bool:
        return self.status == FOUND

    @property
    def proven_minimal(self) -> bool:
        """No smaller II was left undecided."""
        return self.found and self.unknown_probes == 0

    @property
    def ii(self) -> int | None:
        return self.schedule.ii if self.schedule else None


def default_max_ii(g: LoopGraph, p: Processor) -> int:
    """II at which a fully sequential schedule certainly exists."""
    return sum(p.latency(o.opcode) for o in g.operations) + len(g.operations)


def _stage_range(g: LoopGraph, ii: int, opts: SearchOptions) -> tuple[StageBounds | None, list[int]]:
    if opts.stages is not None:
        return None, [opts.stages]
    sb = stage_bounds(g, ii, opts.max_stages)
    return sb, list(range(sb.min_stages, sb.max_stages + 1))


@dataclass
class ProbeResult:
    status: str
    schedule: ModuloSchedule | None = None
    pressure: dict[str, int] = field(default_factory=dict)
    core: list[str] | None = None
    problem: Problem | None = None
    rp_files: list[str] = field(default_factory=list)


def probe(g: LoopGraph, p: Processor, ii: int, stages: int, opts: SearchOptions = SearchOptions(),
          rp_files: list[str] | None = None, record: Callable[[Probe], None] | None = None) -> ProbeResult:
    """Decide one (II, stages) pair on an augmented graph, adding pressure limits lazily.

    ``rp_files`` seeds the register files whose limits are encoded up front.
    """
    if rp_files is None:
        rp_files = [rf.id for rf in p.register_files] if opts.rp_mode == "eager" else []
    pr = encode_core(g, p, ii, stages, opts.encoding, opts.writeback_offset)
    if rp_files:
        pr = encode_register_pressure(pr, g, p, rp_files)
    tracked = open_session(pr, opts.want_core, opts.backend)
    try:
        outcome = check_session(tracked, opts.budget)
        rp_round = 0
        while True:
            if record:
                record(Probe(ii, stages, outcome.status, rp_round, outcome.stats))
            if outcome.unsat:
                core = list(outcome.core or [])
                if opts.want_core and not validate_core(tracked.problem, core, backend=opts.backend):
                    raise BackendError(f"core at II={ii} stages={stages} is satisfiable on its own")
                return ProbeResult(solver.UNSAT, core=core if opts.want_core else None,
                                   problem=tracked.problem, rp_files=list(tracked.problem.rp_files))
            if outcome.unknown:
                return ProbeResult(solver.UNKNOWN, problem=tracked.problem, rp_files=list(tracked.problem.rp_files))
            s = decode_schedule(outcome.model, tracked.problem, g, p)
            bad = check_schedule(s, g, p)
            if bad:
                raise BackendError(f"decoded schedule is illegal: {bad[0].message}")
            peak = measure_pressure(s, g, p)
            over = [rf.id for rf in p.register_files if peak[rf.id] > rf.capacity]
            if opts.rp_mode == "off" or not over:
                return ProbeResult(solver.SAT, s, peak, problem=tracked.problem,
                                   rp_files=list(tracked.problem.rp_files))
            missing = [rf for rf in over if rf not in tracked.problem.rp_files]
            if not missing:
                raise BackendError(f"schedule overflows {over} despite encoded pressure limits")
            extended = encode_register_pressure(tracked.problem, g, p, missing)
            extra = extended.constraints[len(tracked.problem.constraints):]
            rp_round += 1
            outcome = solve_incremental(tracked, extra, opts.budget, declarations=extended)
    finally:
        tracked.session.close()


def find_schedule(g: LoopGraph, p: Processor, opts: SearchOptions = SearchOptions(),
                  on_probe: Callable[[Probe], None] | None = None) -> SearchReport:
    """Smallest II (then fewest stages) with a legal schedule.

    Loop-carried anti dependencies are added to ``g`` before searching.
    With ``rp_mode='lazy'`` register-pressure constraints are added only for
    register files that a candidate schedule overflows, and the same solver
    session is re-checked.
    """
    findings = validate(g, p)
    if findings:
        raise InputError("; ".join(f.message for f in findings), "loop")
    g = augment_loop_carried(g)
    try:
        lower = mii(g, p)
    except InfeasibleError as err:
        return SearchReport(INFEASIBLE, reason=str(err))
    report = SearchReport(GAVE_UP, mii=lower,
                          invariant_inputs=[v for v in g.virtual_registers if g.definer(v) is None])
    max_ii = opts.max_ii or default_max_ii(g, p)

    def record(pb: Probe) -> None:
        report.trace.append(pb)
        log.info("II=%d stages=%d round=%d: %s", pb.ii, pb.stages, pb.rp_round, pb.status)
        if on_probe:
            on_probe(pb)

    for ii in range(lower, max_ii + 1):
        try:
            _sb, stage_list = _stage_range(g, ii, opts)
        except BoundsError as err:
            if "negative cycle" not in str(err):
                raise
            record(Probe(ii, 0, solver.UNSAT, 0, {"reason": str(err)}))
            continue
        rp_files = None
        for stages in stage_list:
            t0 = time.perf_counter()
            res = probe(g, p, ii, stages, opts, rp_files, record)
            log.debug("II=%d stages=%d took %.3fs", ii, stages, time.perf_counter() - t0)
            # pressure limits learned at one stage count carry over to the next
            rp_files = res.rp_files
            if res.status == solver.SAT:
                report.status, report.schedule, report.pressure = FOUND, res.schedule, res.pressure
                report.rp_files[ii] = res.rp_files
                report.reason = f"II={ii} stages={res.schedule.num_stages} after {len(report.trace)} probes"
                return report
            if res.status == solver.UNSAT:
                if opts.want_core:
                    report.cores[(ii, stages)] = res.core
                    report.problems[(ii, stages)] = res.problem
                continue
            report.unknown_probes += 1
            break
        if rp_files is not None:
            report.rp_files[ii] = rp_files
        if report.unknown_probes and opts.on_unknown == "abort":
            report.reason = f"solver budget exhausted at II={ii}"
            return report
    if report.unknown_probes:
        report.reason = f"no schedule up to II={max_ii}; {report.unknown_probes} probes ran out of budget"
        return report
    report.status = INFEASIBLE
    report.reason = f"no schedule with II in {lower}..{max_ii}"
    return report
