"""Command-line driver.

Results go to standard output, logs and traces to standard error.
Exit codes: 0 feasible/success, 1 infeasible, 2 input error, 3 solver budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from . import data, solver
from .baseline import HeuristicOptions, ims_schedule
from .bounds import longest_path, mii, rec_mii, res_mii, stage_bounds
from .encoder import ENCODINGS, encode_core, encode_register_pressure
from .errors import BoundsError, InfeasibleError, InputError
from .explain import explain_core, render
from .loop import LoopGraph, augment_loop_carried, load_loop
from .machine import Processor, load_machine
from .schedule import (
    ModuloSchedule,
    check_schedule,
    load_schedule,
    render_table,
    schedule_to_doc,
    sequential,
    simulate,
    SimulationConflict,
)
from .search import RP_MODES, SearchOptions, find_schedule, probe

OK, INFEASIBLE, INPUT_ERROR, UNKNOWN = 0, 1, 2, 3
log = logging.getLogger("modsched")


def _resolve(name: str) -> Path:
    """A path on disk, falling back to the fixtures bundled with the package."""
    path = Path(name)
    if path.exists():
        return path
    bundled = data.path(path.name)
    if bundled.exists():
        return bundled
    raise InputError(f"no such file: {name}")


def _read_json(name: str) -> Any:
    path = _resolve(name)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})") from None


def _load(args) -> tuple[Processor, LoopGraph]:
    p = load_machine(_read_json(args.machine))
    g = load_loop(_read_json(args.loop), p)
    return p, g


def _options(args, want_core: bool = False) -> SearchOptions:
    budget = solver.Budget(resource_limit=args.resource_limit) if args.resource_limit else solver.UNLIMITED
    return SearchOptions(
        max_ii=args.max_ii,
        stages=args.stages,
        max_stages=args.max_stages,
        rp_mode=args.rp_mode,
        budget=budget,
        want_core=want_core,
        encoding=args.encoding,
        writeback_offset=args.writeback_offset,
    )


def _emit(args, doc: Any, table: str) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True) if args.format == "json" else table)


def _schedule_out(args, s: ModuloSchedule, p: Processor, extra: dict[str, Any]) -> None:
    doc = schedule_to_doc(s)
    if getattr(args, "output", None):
        Path(args.output).write_text(json.dumps(doc, indent=2) + "\n")
    summary = "  ".join(f"{k}={v}" for k, v in extra.items())
    _emit(args, {**extra, "schedule": doc},
          f"{summary}\n{render_table(s, p)}\n\n{render_table(s, p, kernel=True)}")


def _trace(pb) -> None:
    print(json.dumps(pb.to_doc(), sort_keys=True), file=sys.stderr)


# -- subcommands ---------------------------------------------------------------------


def cmd_schedule(args) -> int:
    p, g = _load(args)
    report = find_schedule(g, p, _options(args), on_probe=_trace if args.trace else None)
    if report.found:
        if not report.proven_minimal:
            log.warning("some probes ran out of budget; II=%d may not be minimal", report.ii)
        extra = {
            "ii": report.ii, "stages": report.schedule.num_stages, "mii": report.mii,
            "pressure": report.pressure, "proven_minimal": report.proven_minimal,
        }
        if report.invariant_inputs:
            extra["invariant_inputs"] = report.invariant_inputs
        _schedule_out(args, report.schedule, p, extra)
        return OK
    print(report.reason, file=sys.stderr)
    return UNKNOWN if report.status == "gave_up" else INFEASIBLE


def cmd_baseline(args) -> int:
    p, g = _load(args)
    res = ims_schedule(g, p, HeuristicOptions(max_ii=args.max_ii, writeback_offset=args.writeback_offset))
    if res.schedule is None:
        print(f"heuristic found no schedule after {res.attempts} placements", file=sys.stderr)
        return INFEASIBLE
    _schedule_out(args, res.schedule, p, {"ii": res.achieved_ii, "stages": res.schedule.num_stages,
                                          "attempts": res.attempts})
    return OK


def cmd_bounds(args) -> int:
    p, g = _load(args)
    g = augment_loop_carried(g)
    rm = res_mii(g, p)
    try:
        cm = rec_mii(g)
    except InfeasibleError as err:
        print(str(err), file=sys.stderr)
        return INFEASIBLE
    lo = max(rm, cm)
    hi = args.max_ii or lo + 3
    rows = []
    for ii in range(lo, hi + 1):
        try:
            sb = stage_bounds(g, ii, args.max_stages)
            rows.append({"ii": ii, "min_stages": sb.min_stages, "max_stages": sb.max_stages,
                         "longest_path": sb.longest_path, "max_separation": sb.max_separation})
        except BoundsError as err:
            if "negative cycle" not in str(err):
                raise
            rows.append({"ii": ii, "error": str(err)})
    doc = {"mii": mii(g, p), "res_mii": rm, "rec_mii": cm, "longest_path": longest_path(g), "stage_bounds": rows}
    lines = [f"MII={doc['mii']} (ResMII={rm}, RecMII={cm}), longest path {doc['longest_path']}",
             "ii  min_stages  max_stages  max_separation"]
    for r in rows:
        if "error" in r:
            lines.append(f"{r['ii']:<3} {r['error']}")
        else:
            lines.append(f"{r['ii']:<3} {r['min_stages']:<11} {r['max_stages']:<11} {r['max_separation']}")
    _emit(args, doc, "\n".join(lines))
    return OK


def cmd_check(args) -> int:
    p, g = _load(args)
    s = load_schedule(_read_json(args.schedule))
    bad = check_schedule(s, augment_loop_carried(g), p)
    doc = {"legal": not bad, "violations": [{"kind": v.kind, "message": v.message} for v in bad]}
    _emit(args, doc, "legal" if not bad else "\n".join(f"[{v.kind}] {v.message}" for v in bad))
    return OK if not bad else INFEASIBLE


def _explain_stages(g: LoopGraph, ii: int, args) -> int:
    if args.stages:
        return args.stages
    try:
        # the most stages is the loosest problem: if it fails, every stage count fails
        return stage_bounds(g, ii, args.max_stages).max_stages
    except BoundsError as err:
        if "negative cycle" not in str(err):
            raise
        return max(1, -(-longest_path(g) // ii))


def cmd_explain(args) -> int:
    p, g = _load(args)
    opts = _options(args, want_core=True)
    ii = args.ii
    if ii is None:
        report = find_schedule(g, p, opts, on_probe=_trace if args.trace else None)
        if report.cores:
            # diagnose the smallest infeasible II at its loosest stage count
            ii = min(k[0] for k in report.cores)
            key = max(k for k in report.cores if k[0] == ii)
            return _diagnose(args, report.cores[key], report.problems[key], opts)
        if not report.found:
            print(report.reason, file=sys.stderr)
            return UNKNOWN if report.status == "gave_up" else INFEASIBLE
        if report.ii == 1:
            print("nothing to explain: the schedule reaches II=1", file=sys.stderr)
            return OK
        # the lower bound ruled out smaller IIs without solving; ask the solver why
        ii = report.ii - 1
    g = augment_loop_carried(g)
    stages = _explain_stages(g, ii, args)
    res = probe(g, p, ii, stages, opts, record=_trace if args.trace else None)
    if res.status == solver.SAT:
        print(f"feasible at II={ii} with {res.schedule.num_stages} stages", file=sys.stderr)
        return OK
    if res.status == solver.UNKNOWN:
        print(f"solver budget exhausted at II={ii}", file=sys.stderr)
        return UNKNOWN
    return _diagnose(args, res.core, res.problem, opts)


def _diagnose(args, core: list[str], pr, opts: SearchOptions) -> int:
    if args.minimize_core:
        core = solver.minimize_core(pr, core, opts.budget)
    print(render(explain_core(core, pr), "json" if args.format == "json" else "text"))
    return INFEASIBLE


def cmd_export_smt(args) -> int:
    p, g = _load(args)
    g = augment_loop_carried(g)
    stages = args.stages or _explain_stages(g, args.ii, args)
    pr = encode_core(g, p, args.ii, stages, args.encoding, args.writeback_offset)
    if args.rp_mode == "eager":
        pr = encode_register_pressure(pr, g, p, [rf.id for rf in p.register_files])
    sys.stdout.write(solver.export_smtlib(pr))
    return OK


def cmd_simulate(args) -> int:
    p, g = _load(args)
    if args.schedule:
        s = load_schedule(_read_json(args.schedule))
    else:
        report = find_schedule(g, p, _options(args))
        if not report.found:
            print(report.reason, file=sys.stderr)
            return UNKNOWN if report.status == "gave_up" else INFEASIBLE
        s = report.schedule
    if args.sequential:
        s = sequential(s)
    trip = args.trip_count or g.trip_count
    if trip is None:
        raise InputError("--trip-count is required when the loop has no trip_count")
    try:
        cycles = simulate(s, trip, augment_loop_carried(g))
    except ValueError as err:
        raise InputError(str(err)) from None
    except SimulationConflict as err:
        print("\n".join(err.conflicts[:20]), file=sys.stderr)
        return INFEASIBLE
    doc = {"cycles": cycles, "trip_count": trip, "ii": s.ii, "stages": s.num_stages, "span": s.span,
           "sequential": bool(args.sequential)}
    _emit(args, doc, str(cycles))
    return OK


# -- argument parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modsched", description="Optimal modulo scheduling for VLIW loops.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(name: str, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help)
        sp.add_argument("-m", "--machine", required=True)
        sp.add_argument("-l", "--loop", required=True)
        sp.add_argument("--format", choices=("table", "json"), default="table")
        sp.add_argument("--max-ii", type=int)
        sp.add_argument("--max-stages", type=int)
        sp.add_argument("--writeback-offset", choices=("0", "latency"), default="0")
        return sp

    def solving(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--stages", type=int)
        sp.add_argument("--rp-mode", choices=RP_MODES, default="lazy")
        sp.add_argument("--resource-limit", type=int)
        sp.add_argument("--trace", action="store_true")
        sp.add_argument("--encoding", choices=ENCODINGS, default="compact")

    sp = common("schedule", "find a minimal-II schedule")
    solving(sp)
    sp.add_argument("-o", "--output", help="also write the schedule JSON here")
    sp.set_defaults(func=cmd_schedule)

    sp = common("bounds", "print MII and per-II stage bounds")
    sp.set_defaults(func=cmd_bounds)

    sp = common("check", "validate a schedule file")
    sp.add_argument("-s", "--schedule", required=True)
    sp.set_defaults(func=cmd_check)

    sp = common("explain", "diagnose why an II is infeasible")
    solving(sp)
    sp.add_argument("--ii", type=int)
    sp.add_argument("--minimize-core", action="store_true")
    sp.set_defaults(func=cmd_explain)

    sp = common("export-smt", "write the constraints for one (II, stages) pair as SMT-LIB")
    solving(sp)
    sp.add_argument("--ii", type=int, required=True)
    sp.set_defaults(func=cmd_export_smt)

    sp = common("baseline", "run the iterative modulo scheduling heuristic")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_baseline)

    sp = common("simulate", "count cycles for a number of iterations")
    solving(sp)
    sp.add_argument("-s", "--schedule", help="schedule JSON; searched for when omitted")
    sp.add_argument("--trip-count", type=int)
    sp.add_argument("--sequential", action="store_true", help="run iterations back to back")
    sp.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return INPUT_ERROR if exc.code else OK
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=logging.WARNING - 10 * min(args.verbose, 2))
    for name in ("max_ii", "max_stages", "stages", "resource_limit", "ii", "trip_count"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            print(f"error: --{name.replace('_', '-')} must be positive", file=sys.stderr)
            return INPUT_ERROR
    try:
        return args.func(args)
    except (InputError, BoundsError) as err:
        print(f"error: {err}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
