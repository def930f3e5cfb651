"""Solver interface, backends and SMT-LIB export.

The engine only talks to :class:`Backend`/:class:`Session`. Two backends
ship: :class:`Z3Backend` for real work and :class:`EnumerationBackend`, a
bounded exhaustive search over the finite variable domains used to
cross-check z3 on tiny problems. Nothing a backend returns is trusted:
models are re-checked with :func:`evaluate` and cores can be re-solved with
:func:`validate_core`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

from . import expr as E
from .encoder import Problem
from .errors import BackendError
from .expr import Expr, Value

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"


@dataclass(frozen=True)
class Budget:
    """Per-call solver allowance.

    ``resource_limit`` is in the backend's deterministic units (z3 rlimit,
    enumeration nodes). ``wall_clock`` seconds is a non-deterministic fallback.
    """

    resource_limit: int | None = None
    wall_clock: float | None = None

    def __post_init__(self):
        if self.resource_limit is not None and self.resource_limit <= 0:
            raise ValueError("resource_limit must be positive")
        if self.wall_clock is not None and self.wall_clock <= 0:
            raise ValueError("wall_clock must be positive")

    @property
    def deterministic(self) -> bool:
        return self.wall_clock is None


UNLIMITED = Budget()


@dataclass
class SolveOutcome:
    status: str
    model: dict[str, Value] | None = None
    core: list[str] | None = None
    reason: str = ""
    stats: dict = field(default_factory=dict)

    @property
    def sat(self) -> bool:
        return self.status == SAT

    @property
    def unsat(self) -> bool:
        return self.status == UNSAT

    @property
    def unknown(self) -> bool:
        return self.status == UNKNOWN


def evaluate(pr: Problem, model: dict[str, Value]) -> list[str]:
    """Labels of constraints that ``model`` violates; empty iff it satisfies ``pr``."""
    return [label for label, c in pr.constraints if not E.evaluate(c, model)]


class Session:
    """One incremental solving context; not shared between threads."""

    def add(self, constraints: Iterable[tuple[str, Expr]], declarations: Problem | None = None) -> None:
        """Assert more constraints. ``declarations`` supplies domains for new variables."""
        raise NotImplementedError

    def check(self, budget: Budget = UNLIMITED) -> SolveOutcome:
        raise NotImplementedError

    def close(self) -> None:
        pass


class Backend:
    name = "abstract"

    def open(self, pr: Problem, want_core: bool = False) -> Session:
        raise NotImplementedError


# -- z3 ---------------------------------------------------------------------


class Z3Session(Session):
    """Constraints reach z3 as SMT-LIB text, which is far cheaper than building terms through the Python API."""

    def __init__(self, pr: Problem, want_core: bool, seed: int = 0):
        try:
            import z3
        except ImportError as err:  # pragma: no cover - depends on environment
            raise BackendError("z3 is not installed") from err
        self.z3 = z3
        self.ctx = z3.Context()
        self.solver = z3.Solver(ctx=self.ctx)
        self.solver.set("random_seed", seed)
        self.want_core = want_core
        self.sorts: dict[str, str] = {}
        self.vars: dict[str, object] = {}
        self.tracked: dict[str, str] = {}
        self.assumptions: list[object] = []
        self.tracked_labels: set[str] = set()
        self.closed = False
        self.add(pr.constraints, pr)

    def _declare(self, name: str, sort: str, out: list[str]) -> None:
        if name in self.sorts:
            return
        self.sorts[name] = sort
        out.append(f"(declare-fun {E.symbol(name)} () {'Int' if sort == 'int' else 'Bool'})")
        z3 = self.z3
        self.vars[name] = z3.Int(name, self.ctx) if sort == "int" else z3.Bool(name, self.ctx)

    def add(self, constraints: Iterable[tuple[str, Expr]], declarations: Problem | None = None) -> None:
        if self.closed:
            raise BackendError("session invalidated")
        lines: list[str] = []
        if declarations is not None:
            for name, sort in declarations.var_sorts().items():
                self._declare(name, sort, lines)
        for label, c in constraints:
            for name, sort in E.variables(c).items():
                self._declare(name, sort, lines)
            text = E.to_smtlib(c)
            if self.want_core:
                if label in self.tracked_labels:
                    raise BackendError(f"label {label!r} asserted twice")
                self.tracked_labels.add(label)
                tracker = f"@{len(self.tracked)}"
                self.tracked[tracker] = label
                lines.append(f"(declare-fun {tracker} () Bool)")
                lines.append(f"(assert (=> {tracker} {text}))")
                self.assumptions.append(self.z3.Bool(tracker, self.ctx))
            else:
                lines.append(f"(assert {text})")
        if lines:
            try:
                self.solver.from_string("\n".join(lines))
            except self.z3.Z3Exception as err:
                raise BackendError(f"z3 rejected the constraints: {err}") from err

    def check(self, budget: Budget = UNLIMITED) -> SolveOutcome:
        if self.closed:
            raise BackendError("session invalidated")
        z3 = self.z3
        self.solver.set("rlimit", budget.resource_limit or 0)
        self.solver.set("timeout", int(budget.wall_clock * 1000) if budget.wall_clock else 4294967295)
        t0 = time.perf_counter()
        result = self.solver.check(*self.assumptions)
        stats = {"seconds": round(time.perf_counter() - t0, 6), "backend": "z3",
                 "deterministic": budget.deterministic}
        try:
            stats["rlimit"] = int(self.solver.statistics().get_key_value("rlimit count"))
        except Exception:
            pass
        if result == z3.sat:
            m = self.solver.model()
            model: dict[str, Value] = {}
            for name, v in self.vars.items():
                val = m.eval(v, model_completion=True)
                model[name] = z3.is_true(val) if self.sorts[name] == "bool" else val.as_long()
            return SolveOutcome(SAT, model=model, stats=stats)
        if result == z3.unsat:
            core = None
            if self.want_core:
                core = sorted(self.tracked[str(t)] for t in self.solver.unsat_core())
            return SolveOutcome(UNSAT, core=core, stats=stats)
        return SolveOutcome(UNKNOWN, reason=self.solver.reason_unknown(), stats=stats)

    def close(self) -> None:
        self.closed = True


class Z3Backend(Backend):
    name = "z3"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def open(self, pr: Problem, want_core: bool = False) -> Session:
        return Z3Session(pr, want_core, self.seed)


# -- bounded enumeration -------------------------------------------------------


def _var_order(pr: Problem) -> list[str]:
    """Scheduling decisions first (op by op), then routing, then derived variables."""
    order: list[str] = []
    ops = [k[1] for k in pr.int_vars if k[0] == "cycle"]
    for op in ops:
        order.append(pr.int_vars[("cycle", op)].args[0])
        order.extend(v.args[0] for k, v in pr.bool_vars.items() if k[0] == "slot" and k[1] == op)
    order.extend(v.args[0] for k, v in pr.bool_vars.items() if k[0] in ("cpb", "cbw"))
    seen = set(order)
    for v in list(pr.int_vars.values()) + list(pr.bool_vars.values()):
        if v.args[0] not in seen:
            order.append(v.args[0])
            seen.add(v.args[0])
    return order


class EnumerationSession(Session):
    """Backtracking search with early pruning; only suitable for a handful of variables."""

    def __init__(self, pr: Problem, want_core: bool):
        self.pr = pr.copy()
        self.want_core = want_core
        self.closed = False

    def add(self, constraints: Iterable[tuple[str, Expr]], declarations: Problem | None = None) -> None:
        if self.closed:
            raise BackendError("session invalidated")
        if declarations is not None:
            _merge_declarations(self.pr, declarations)
        sorts = self.pr.var_sorts()
        for label, c in constraints:
            for name in E.variables(c):
                if name not in sorts:
                    raise BackendError(f"enumeration backend needs a declared domain for {name!r}")
            self.pr.constraints.append((label, c))

    def check(self, budget: Budget = UNLIMITED) -> SolveOutcome:
        if self.closed:
            raise BackendError("session invalidated")
        pr = self.pr
        sorts = pr.var_sorts()
        order = _var_order(pr)
        position = {name: i for i, name in enumerate(order)}
        # each constraint is checked once its last variable (in search order) is assigned,
        # and speculatively after every assignment of one of its variables
        watch: dict[str, list[Expr]] = {name: [] for name in order}
        always: list[Expr] = []
        for _, c in pr.constraints:
            names = E.variables(c)
            if not names:
                always.append(c)
                continue
            for name in names:
                watch[name].append(c)
        t0 = time.perf_counter()
        limit = budget.resource_limit
        deadline = t0 + budget.wall_clock if budget.wall_clock else None
        nodes = 0
        env: dict[str, Value] = {}

        def stats() -> dict:
            return {"seconds": round(time.perf_counter() - t0, 6), "backend": "enumeration", "nodes": nodes,
                    "deterministic": budget.deterministic}

        if any(not E.evaluate(c, {}) for c in always):
            return self._unsat(stats())

        class Exhausted(Exception):
            pass

        def domain(name: str) -> Iterable[Value]:
            if sorts[name] == "bool":
                return (False, True)
            lo, hi = pr.domains[name]
            return range(lo, hi + 1)

        def search(i: int) -> bool:
            nonlocal nodes
            if i == len(order):
                return True
            name = order[i]
            for value in domain(name):
                nodes += 1
                if limit is not None and nodes > limit:
                    raise Exhausted
                if deadline is not None and nodes % 1024 == 0 and time.perf_counter() > deadline:
                    raise Exhausted
                env[name] = value
                if all(E.partial_evaluate(c, env) is not False for c in watch[name]):
                    if search(i + 1):
                        return True
            del env[name]
            return False

        try:
            found = search(0)
        except Exhausted:
            return SolveOutcome(UNKNOWN, reason="enumeration budget exhausted", stats=stats())
        if found:
            return SolveOutcome(SAT, model=dict(env), stats=stats())
        return self._unsat(stats())

    def _unsat(self, stats: dict) -> SolveOutcome:
        # the full constraint set is a valid, if coarse, core
        return SolveOutcome(UNSAT, core=sorted(self.pr.labels) if self.want_core else None, stats=stats)

    def close(self) -> None:
        self.closed = True


class EnumerationBackend(Backend):
    name = "enumeration"

    def open(self, pr: Problem, want_core: bool = False) -> Session:
        return EnumerationSession(pr, want_core)


DEFAULT_BACKEND: Backend = Z3Backend()


# -- entry points ------------------------------------------------------------------


def _checked(pr_constraints: Problem, outcome: SolveOutcome) -> SolveOutcome:
    if outcome.sat:
        bad = evaluate(pr_constraints, outcome.model)
        if bad:
            raise BackendError(f"backend model violates {len(bad)} constraints, e.g. {bad[0]}")
    if outcome.unsat and outcome.core is not None:
        known = set(pr_constraints.labels)
        stray = [lbl for lbl in outcome.core if lbl not in known]
        if stray:
            raise BackendError(f"core names unknown labels: {stray[:3]}")
    return outcome


@dataclass
class TrackedSession:
    """A backend session together with the problem it currently represents."""

    session: Session
    problem: Problem
    want_core: bool


def open_session(pr: Problem, want_core: bool = False, backend: Backend | None = None) -> TrackedSession:
    backend = backend or DEFAULT_BACKEND
    return TrackedSession(backend.open(pr, want_core), pr.copy(), want_core)


def check_session(tracked: TrackedSession, budget: Budget = UNLIMITED) -> SolveOutcome:
    return _checked(tracked.problem, tracked.session.check(budget))


def solve(pr: Problem, budget: Budget = UNLIMITED, want_core: bool = False,
          backend: Backend | None = None) -> SolveOutcome:
    """Solve ``pr`` from scratch. Sat models are re-validated before returning."""
    tracked = open_session(pr, want_core, backend)
    try:
        return _checked(pr, tracked.session.check(budget))
    finally:
        tracked.session.close()


def _merge_declarations(target: Problem, source: Problem) -> None:
    for key, v in source.int_vars.items():
        if key not in target.int_vars:
            target.int_vars[key] = v
            target.domains[v.args[0]] = source.domains[v.args[0]]
    for key, v in source.bool_vars.items():
        target.bool_vars.setdefault(key, v)


def solve_incremental(tracked: TrackedSession, extra: list[tuple[str, Expr]],
                      budget: Budget = UNLIMITED, declarations: Problem | None = None) -> SolveOutcome:
    """Add ``extra`` to a live session and re-check; equivalent to solving the union.

    ``declarations`` is a problem that declares any new variables and labels in ``extra``.
    """
    known = set(tracked.problem.labels)
    for label, _ in extra:
        if label in known:
            raise ValueError(f"label {label!r} already asserted in this session")
    tracked.session.add(extra, declarations)
    tracked.problem.constraints.extend(extra)
    if declarations is not None:
        _merge_declarations(tracked.problem, declarations)
        tracked.problem.rp_files = declarations.rp_files
        for label, _ in extra:
            if label in declarations.label_info:
                tracked.problem.label_info[label] = declarations.label_info[label]
    return _checked(tracked.problem, tracked.session.check(budget))


def validate_core(pr: Problem, core: list[str], budget: Budget = UNLIMITED,
                  backend: Backend | None = None) -> bool:
    """True iff the constraints named in ``core`` are unsatisfiable on their own."""
    return solve(pr.restricted(core), budget, backend=backend).unsat


def minimize_core(pr: Problem, core: list[str], budget: Budget = UNLIMITED,
                  backend: Backend | None = None) -> list[str]:
    """Deletion-based minimisation: drop each label whose removal keeps the set unsat."""
    current = list(core)
    for label in list(core):
        trial = [lbl for lbl in current if lbl != label]
        if solve(pr.restricted(trial), budget, backend=backend).unsat:
            current = trial
    return current


# -- SMT-LIB -----------------------------------------------------------------


def export_smtlib(pr: Problem) -> str:
    """SMT-LIB 2.6 script with one named assertion per constraint label."""
    lines = [
        f"; modulo scheduling problem: ii={pr.ii} stages={pr.num_stages} "
        f"encoding={pr.encoding} writeback_offset={pr.writeback_offset}"
        + (f" register_pressure={','.join(pr.rp_files)}" if pr.rp_files else ""),
        "(set-info :smt-lib-version 2.6)",
        "(set-option :produce-unsat-cores true)",
        "(set-logic QF_LIA)",
    ]
    for name, sort in pr.var_sorts().items():
        lines.append(f"(declare-fun {E.symbol(name)} () {'Int' if sort == 'int' else 'Bool'})")
    for label, c in pr.constraints:
        lines.append(f"(assert (! {E.to_smtlib(c)} :named {E.symbol(label)}))")
    lines.append("(check-sat)")
    lines.append("(get-unsat-core)")
    return "\n".join(lines) + "\n"
