"""A small constraint language over integer and Boolean variables.

Expressions are immutable trees. The same tree is evaluated in Python
(:func:`evaluate`), lowered to z3, and printed as SMT-LIB, so every backend
sees exactly the constraint the encoder built.
"""

from __future__ import annotations

from typing import Mapping, Union

Value = Union[int, bool]


class Expr:
    __slots__ = ("op", "args", "sort")

    def __init__(self, op: str, args: tuple, sort: str):
        self.op = op
        self.args = args
        self.sort = sort

    def __repr__(self) -> str:
        return to_smtlib(self)

    # arithmetic
    def __add__(self, other: Expr | int) -> Expr:
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Expr | int) -> Expr:
        return add(self, mul(-1, other))

    def __rsub__(self, other: Expr | int) -> Expr:
        return add(other, mul(-1, self))

    def __mul__(self, k: int) -> Expr:
        return mul(k, self)

    __rmul__ = __mul__

    def __mod__(self, k: int) -> Expr:
        return mod(self, k)

    # comparisons
    def __le__(self, other: Expr | int) -> Expr:
        return Expr("le", (self, lift(other)), "bool")

    def __lt__(self, other: Expr | int) -> Expr:
        return Expr("lt", (self, lift(other)), "bool")

    def __ge__(self, other: Expr | int) -> Expr:
        return Expr("le", (lift(other), self), "bool")

    def __gt__(self, other: Expr | int) -> Expr:
        return Expr("lt", (lift(other), self), "bool")

    # boolean
    def __and__(self, other: Expr | bool) -> Expr:
        return and_(self, other)

    def __or__(self, other: Expr | bool) -> Expr:
        return or_(self, other)

    def __invert__(self) -> Expr:
        return not_(self)


def lift(x: Expr | int | bool) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, bool):
        return TRUE if x else FALSE
    if isinstance(x, int):
        return Expr("const", (x,), "int")
    raise TypeError(f"cannot lift {x!r}")


TRUE = Expr("const", (True,), "bool")
FALSE = Expr("const", (False,), "bool")


def const(v: Value) -> Expr:
    return lift(v)


def int_var(name: str) -> Expr:
    return Expr("var", (name,), "int")


def bool_var(name: str) -> Expr:
    return Expr("var", (name,), "bool")


def add(*xs: Expr | int) -> Expr:
    if not xs:
        return lift(0)
    return Expr("add", tuple(lift(x) for x in xs), "int")


def mul(k: int, x: Expr | int) -> Expr:
    return Expr("mul", (k, lift(x)), "int")


def mod(x: Expr | int, k: int) -> Expr:
    if k < 1:
        raise ValueError("modulus must be positive")
    return Expr("mod", (lift(x), k), "int")


def eq(a: Expr | Value, b: Expr | Value) -> Expr:
    return Expr("eq", (lift(a), lift(b)), "bool")


def not_(x: Expr | bool) -> Expr:
    return Expr("not", (lift(x),), "bool")


def and_(*xs: Expr | bool) -> Expr:
    if not xs:
        return TRUE
    if len(xs) == 1:
        return lift(xs[0])
    return Expr("and", tuple(lift(x) for x in xs), "bool")


def or_(*xs: Expr | bool) -> Expr:
    if not xs:
        return FALSE
    if len(xs) == 1:
        return lift(xs[0])
    return Expr("or", tuple(lift(x) for x in xs), "bool")


def implies(a: Expr | bool, b: Expr | bool) -> Expr:
    return Expr("implies", (lift(a), lift(b)), "bool")


def exactly_one(*xs: Expr) -> Expr:
    """n-ary xor in the sense of 'exactly one argument is true'."""
    return Expr("exactly_one", tuple(lift(x) for x in xs), "bool")


def ite(c: Expr | bool, t: Expr | Value, e: Expr | Value) -> Expr:
    t, e = lift(t), lift(e)
    if t.sort != e.sort:
        raise TypeError("ite branches must share a sort")
    return Expr("ite", (lift(c), t, e), t.sort)


def count(*xs: Expr) -> Expr:
    """Number of true Boolean arguments, as an integer term."""
    return add(*(ite(x, 1, 0) for x in xs)) if xs else lift(0)


def variables(x: Expr, out: dict[str, str] | None = None) -> dict[str, str]:
    """Map of variable name -> sort occurring in ``x``."""
    if out is None:
        out = {}
    stack = [x]
    while stack:
        e = stack.pop()
        if e.op == "var":
            out[e.args[0]] = e.sort
        elif e.op != "const":
            stack.extend(a for a in e.args if isinstance(a, Expr))
    return out


def evaluate(x: Expr, env: Mapping[str, Value]) -> Value:
    """Evaluate ``x`` under a total assignment ``env``."""
    op, args = x.op, x.args
    if op == "const":
        return args[0]
    if op == "var":
        return env[args[0]]
    if op == "add":
        return sum(evaluate(a, env) for a in args)
    if op == "mul":
        return args[0] * evaluate(args[1], env)
    if op == "mod":
        return evaluate(args[0], env) % args[1]
    if op == "eq":
        return evaluate(args[0], env) == evaluate(args[1], env)
    if op == "le":
        return evaluate(args[0], env) <= evaluate(args[1], env)
    if op == "lt":
        return evaluate(args[0], env) < evaluate(args[1], env)
    if op == "not":
        return not evaluate(args[0], env)
    if op == "and":
        return all(evaluate(a, env) for a in args)
    if op == "or":
        return any(evaluate(a, env) for a in args)
    if op == "implies":
        return (not evaluate(args[0], env)) or bool(evaluate(args[1], env))
    if op == "exactly_one":
        return sum(1 for a in args if evaluate(a, env)) == 1
    if op == "ite":
        return evaluate(args[1], env) if evaluate(args[0], env) else evaluate(args[2], env)
    raise ValueError(f"unknown operator {op!r}")


def partial_evaluate(x: Expr, env: Mapping[str, Value]) -> Value | None:
    """Like :func:`evaluate` but returns ``None`` when unassigned variables matter."""
    op, args = x.op, x.args
    if op == "const":
        return args[0]
    if op == "var":
        return env.get(args[0])
    if op == "and":
        unknown = False
        for a in args:
            v = partial_evaluate(a, env)
            if v is None:
                unknown = True
            elif not v:
                return False
        return None if unknown else True
    if op == "or":
        unknown = False
        for a in args:
            v = partial_evaluate(a, env)
            if v is None:
                unknown = True
            elif v:
                return True
        return None if unknown else False
    if op == "implies":
        a = partial_evaluate(args[0], env)
        if a is False:
            return True
        b = partial_evaluate(args[1], env)
        if b is True:
            return True
        if a is None or b is None:
            return None
        return not a or b
    if op == "not":
        v = partial_evaluate(args[0], env)
        return None if v is None else not v
    if op == "exactly_one":
        ones, unknown = 0, 0
        for a in args:
            v = partial_evaluate(a, env)
            if v is None:
                unknown += 1
            elif v:
                ones += 1
        if ones > 1:
            return False
        if unknown:
            return None
        return ones == 1
    if op == "ite":
        c = partial_evaluate(args[0], env)
        if c is None:
            return None
        return partial_evaluate(args[1] if c else args[2], env)
    sub = [partial_evaluate(a, env) if isinstance(a, Expr) else a for a in args]
    if any(v is None for v in sub):
        return None
    return evaluate(Expr(op, tuple(lift(v) if isinstance(a, Expr) else v for a, v in zip(args, sub)), x.sort), {})


_SIMPLE_SYMBOL_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789~!@$%^&*_-+=<>.?/")


def symbol(name: str) -> str:
    """SMT-LIB symbol for ``name``, quoted when it is not a simple symbol."""
    if name and set(name) <= _SIMPLE_SYMBOL_CHARS and not name[0].isdigit():
        return name
    if "|" in name or "\\" in name:
        raise ValueError(f"name {name!r} cannot be an SMT-LIB symbol")
    return f"|{name}|"


def to_smtlib(x: Expr) -> str:
    op, args = x.op, x.args
    if op == "const":
        v = args[0]
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v) if v >= 0 else f"(- {-v})"
    if op == "var":
        return symbol(args[0])
    if op == "mul":
        k = args[0]
        return f"(* {k if k >= 0 else f'(- {-k})'} {to_smtlib(args[1])})"
    if op == "mod":
        return f"(mod {to_smtlib(args[0])} {args[1]})"
    name = {
        "add": "+",
        "eq": "=",
        "le": "<=",
        "lt": "<",
        "not": "not",
        "and": "and",
        "or": "or",
        "implies": "=>",
        "ite": "ite",
    }.get(op)
    if op == "exactly_one":
        # ((_ pbeq 1 1 ... 1) ...) is solver specific; spell it out portably
        terms = " ".join(f"(ite {to_smtlib(a)} 1 0)" for a in args)
        return f"(= (+ {terms} 0) 1)" if len(args) == 1 else f"(= (+ {terms}) 1)"
    if op == "add" and len(args) == 1:
        return to_smtlib(args[0])
    if name is None:
        raise ValueError(f"unknown operator {op!r}")
    return f"({name} {' '.join(to_smtlib(a) for a in args)})"
