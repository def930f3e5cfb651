from __future__ import annotations

import z3
from hypothesis import given, settings, strategies as st

from modsched import expr as E

NAMES = ["x", "y", "z"]
FLAGS = ["p", "q"]


def int_terms():
    leaf = st.one_of(st.integers(-5, 5).map(E.const), st.sampled_from(NAMES).map(E.int_var))
    return st.recursive(leaf, lambda kids: st.one_of(
        st.tuples(kids, kids).map(lambda t: E.add(*t)),
        st.tuples(st.integers(-3, 3), kids).map(lambda t: E.mul(*t)),
        st.tuples(kids, st.integers(1, 4)).map(lambda t: E.mod(*t)),
    ), max_leaves=6)


def bool_terms():
    atom = st.one_of(
        st.sampled_from(FLAGS).map(E.bool_var),
        st.tuples(int_terms(), int_terms()).map(lambda t: t[0] <= t[1]),
        st.tuples(int_terms(), int_terms()).map(lambda t: t[0] < t[1]),
        st.tuples(int_terms(), int_terms()).map(lambda t: E.eq(*t)),
    )
    return st.recursive(atom, lambda kids: st.one_of(
        kids.map(E.not_),
        st.lists(kids, min_size=1, max_size=3).map(lambda xs: E.and_(*xs)),
        st.lists(kids, min_size=1, max_size=3).map(lambda xs: E.or_(*xs)),
        st.tuples(kids, kids).map(lambda t: E.implies(*t)),
        st.lists(kids, min_size=1, max_size=3).map(lambda xs: E.exactly_one(*xs)),
    ), max_leaves=5)


envs = st.fixed_dictionaries({**{n: st.integers(-6, 6) for n in NAMES}, **{f: st.booleans() for f in FLAGS}})


@settings(max_examples=150, deadline=None)
@given(bool_terms(), envs)
def test_evaluate_agrees_with_z3_on_smtlib_text(x, env):
    decls = "".join(f"(declare-fun {n} () Int)" for n in NAMES) + "".join(f"(declare-fun {f} () Bool)" for f in FLAGS)
    pins = "".join(f"(assert (= {n} {E.to_smtlib(E.const(env[n]))}))" for n in NAMES + FLAGS)
    s = z3.Solver()
    s.add(z3.parse_smt2_string(decls + pins + f"(assert {E.to_smtlib(x)})"))
    assert (s.check() == z3.sat) == E.evaluate(x, env)


@settings(max_examples=150, deadline=None)
@given(bool_terms(), envs, st.sets(st.sampled_from(NAMES + FLAGS)))
def test_partial_evaluate_is_sound(x, env, hidden):
    partial = {k: v for k, v in env.items() if k not in hidden}
    got = E.partial_evaluate(x, partial)
    assert got is None or got == E.evaluate(x, env)
    if not hidden:
        assert got == E.evaluate(x, env)


def test_python_mod_matches_smt_for_positive_divisor():
    x = E.int_var("x")
    assert E.evaluate(x % 3, {"x": -1}) == 2


def test_count_and_ite():
    a, b = E.bool_var("a"), E.bool_var("b")
    assert E.evaluate(E.count(a, b, a), {"a": True, "b": False}) == 2
    assert E.evaluate(E.ite(b, 1, 7), {"b": False}) == 7


def test_symbols_are_quoted_when_needed():
    assert E.symbol("cycle/LD") == "cycle/LD"
    assert E.symbol("c3/slot=LSU0") == "c3/slot=LSU0"
    assert E.symbol("1abc") == "|1abc|"
    assert E.symbol("a b") == "|a b|"


def test_variables_collects_sorts():
    x = E.and_(E.int_var("n") <= 3, E.bool_var("f"))
    assert E.variables(x) == {"n": "int", "f": "bool"}
