"""Big-step interpreter with overflow-event tracking.

Arithmetic is mathematical: an addition or multiplication above MaxInt records
an event and only aborts when the site carries a runtime check. Subtraction
below zero and division by zero record an event and then abort, as a runtime
check failure when the site is guarded and as a stuck evaluation otherwise.
State changes are published only by a completed transaction.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Protocol

from . import ast as A
from .values import MapV, StructV, UNIT_V, Value, const_sum, values_equal, zero_val

Site = tuple[str, int, int, str]
HAVOC_MAX = min(A.MAX_INT, 2**64 - 1)
DEFAULT_FUEL = 10_000

REQUIRE_FAILED = "require-failed"
RUNTIME_CHECK = "runtime-overflow-check"
ASSERT_FAILED = "assert-failed"
STUCK = "stuck"


@dataclass(frozen=True)
class Event:
    site: Site
    kind: str  # OverflowWouldOccur | DivByZero
    op: str
    operands: tuple[int, ...]

    def to_json(self) -> dict:
        fn, line, col, op = self.site
        return {"function": fn, "line": line, "column": col, "kind": self.kind, "op": self.op,
                "operands": [str(x) for x in self.operands]}


@dataclass(frozen=True)
class Completed:
    store: dict[str, Value]
    value: Value
    events: tuple[Event, ...]


@dataclass(frozen=True)
class Aborted:
    site: Site | None
    cause: str
    events: tuple[Event, ...]


Outcome = Completed | Aborted


class Observer(Protocol):
    def on_update(self, fn: str, map_type: A.BaseType, before: MapV, key: int, value: Value, after: MapV) -> None: ...

    def on_commit(self, fn: str, store: dict[str, Value]) -> None: ...


class _Abort(Exception):
    def __init__(self, site: Site | None, cause: str):
        super().__init__(cause)
        self.site = site
        self.cause = cause


def _site(fn: str, e, label: str) -> Site:
    loc = getattr(e, "loc", None)
    return (fn, loc.line, loc.col, label) if loc else (fn, 0, 0, label)


@dataclass
class Interpreter:
    contract: A.Contract
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    guarded: frozenset[Site] = frozenset()
    fuel: int = DEFAULT_FUEL
    observer: Observer | None = None

    def __post_init__(self):
        self.structs = self.contract.struct_table()

    # ------------------------------------------------------------ entry points

    def run_function(self, name: str, args: list[Value], store: dict[str, Value], sender: int = 0) -> Outcome:
        """Run one transaction; an abort leaves `store` as it was."""
        f = self.contract.function(name)
        if f is None:
            raise KeyError(f"no function {name}")
        self.events: list[Event] = []
        self.steps = self.fuel
        work = dict(store)
        try:
            value = self._invoke(f, args, work, sender)
        except _Abort as a:
            return Aborted(a.site, a.cause, tuple(self.events))
        return Completed(work, value, tuple(self.events))

    def construct(self, args: list[Value], sender: int = 0) -> Outcome:
        """Run the constructor on a store of zero values."""
        store = {sv.name: zero_val(sv.type.base, self.structs) for sv in self.contract.state_vars}
        if self.contract.ctor is None:
            return Completed(store, UNIT_V, ())
        return self.run_function(A.CTOR, args, store, sender)

    def _invoke(self, f: A.FunDecl, args: list[Value], work: dict[str, Value], sender: int) -> Value:
        env: dict[str, Value] = {A.SENDER: sender}
        for p, v in zip(f.params, args):
            env[p.name] = v
        self.exec(f.name, f.body, env, work)
        return self.eval(f.name, f.result, env)

    # ------------------------------------------------------------ statements

    def exec(self, fn: str, s: A.Stmt, env: dict[str, Value], work: dict[str, Value]) -> None:
        match s:
            case A.Seq(a, b):
                self.exec(fn, a, env, work)
                self.exec(fn, b, env, work)
            case A.Skip():
                pass
            case A.Let(name, _, value):
                env[name] = self.eval(fn, value, env)
            case A.Assume(cond):
                if not self.eval(fn, cond, env):
                    raise _Abort(_site(fn, s, "require"), REQUIRE_FAILED)
            case A.Assert(cond):
                if not self.eval(fn, cond, env):
                    raise _Abort(_site(fn, s, "assert"), ASSERT_FAILED)
            case A.Fetch(bindings):
                for sv, local in bindings:
                    env[local] = work[sv]
            case A.Commit(writes):
                vals = [(self.eval(fn, e, env), sv) for e, sv in writes]
                for v, sv in vals:
                    work[sv] = v
                if self.observer is not None:
                    self.observer.on_commit(fn, dict(work))
            case A.If(cond, then, orelse, join):
                c = self.eval(fn, cond, env)
                self.exec(fn, then if c else orelse, env, work)
                for p in join:
                    env[p.name] = env[p.left if c else p.right]
            case A.While(join, cond, body):
                for p in join:
                    env[p.name] = env[p.left]
                while self.eval(fn, cond, env):
                    self.steps -= 1
                    if self.steps < 0:
                        raise _Abort(_site(fn, s, "while"), STUCK)
                    self.exec(fn, body, env, work)
                    for p in join:
                        env[p.name] = env[p.right]
            case A.Call(target, _, func, args):
                callee = self.contract.function(func)
                vals = [self.eval(fn, a, env) for a in args]
                env[target] = self._invoke(callee, vals, work, env[A.SENDER])
            case _:
                raise TypeError(s)

    # ------------------------------------------------------------ expressions

    def eval(self, fn: str, e: A.Expr, env: dict[str, Value]) -> Value:
        match e:
            case A.Nat(n):
                return n
            case A.BoolLit(b):
                return b
            case A.UnitLit():
                return UNIT_V
            case A.Var(name):
                return env[name]
            case A.Not(a):
                return not self.eval(fn, a, env)
            case A.BinOp(op, l, r):
                a = self.eval(fn, l, env)
                b = self.eval(fn, r, env)
                return self.binop(fn, e, op, a, b)
            case A.Index(m, k):
                mv = self.eval(fn, m, env)
                return mv.get(self.eval(fn, k, env), self.structs)
            case A.Update(m, k, v):
                mv = self.eval(fn, m, env)
                key = self.eval(fn, k, env)
                val = self.eval(fn, v, env)
                out = mv.set(key, val)
                if self.observer is not None:
                    self.observer.on_update(fn, A.MapType(mv.value_type), mv, key, val, out)
                return out
            case A.Field(s, x):
                return self.eval(fn, s, env).get(x)
            case A.FieldUpdate(s, x, v):
                return self.eval(fn, s, env).set(x, self.eval(fn, v, env))
            case A.StructLit(name, fields):
                return StructV(name, tuple((f, self.eval(fn, x, env)) for f, x in fields))
            case A.MapLit(vt, entries):
                out = MapV(vt, ())
                for k, x in entries:
                    out = out.set(k, self.eval(fn, x, env))
                return out
            case A.Havoc(t):
                return self.havoc(t)
        raise TypeError(f"cannot evaluate {type(e).__name__}")

    def binop(self, fn: str, e: A.Expr, op: str, a, b) -> Value:
        match op:
            case "+" | "*":
                r = a + b if op == "+" else a * b
                if r > A.MAX_INT:
                    self.fail(fn, e, op, "OverflowWouldOccur", (a, b), stuck=False)
                return r
            case "-":
                if b > a:
                    self.fail(fn, e, op, "OverflowWouldOccur", (a, b), stuck=True)
                return a - b
            case "/":
                if b == 0:
                    self.fail(fn, e, op, "DivByZero", (a, b), stuck=True)
                return a // b
            case "<":
                return a < b
            case "<=":
                return a <= b
            case ">":
                return a > b
            case ">=":
                return a >= b
            case "==":
                return values_equal(a, b, self.structs)
            case "!=":
                return not values_equal(a, b, self.structs)
            case "&&":
                return a and b
            case "||":
                return a or b
        raise ValueError(op)

    def fail(self, fn: str, e, op: str, kind: str, operands, stuck: bool) -> None:
        site = _site(fn, e, op)
        self.events.append(Event(site, kind, op, tuple(operands)))
        if site in self.guarded:
            raise _Abort(site, RUNTIME_CHECK)
        if stuck:
            raise _Abort(site, STUCK)

    def havoc(self, t: A.BaseType) -> Value:
        return random_value(t, self.structs, self.rng)


def random_value(t: A.BaseType, structs: A.StructTable, rng: random.Random, small: bool = False) -> Value:
    """Uniform draw for UInt over [0, min(MaxInt, 2^64 - 1)] (or a small range), small random maps."""
    match t:
        case A.UIntType():
            return rng.randint(0, 20) if small else rng.randint(0, HAVOC_MAX)
        case A.BoolType():
            return rng.random() < 0.5
        case A.UnitType():
            return UNIT_V
        case A.MapType(v):
            out = MapV(v, ())
            for _ in range(rng.randint(0, 3)):
                out = out.set(rng.randint(0, 5), random_value(v, structs, rng, small))
            return out
        case A.StructType(name):
            return StructV(name, tuple((f, random_value(ft, structs, rng, small)) for f, ft in structs[name].fields))
    raise TypeError(t)


# ------------------------------------------------------------ refinements


def aggregate_path(e: A.Expr) -> tuple[A.Expr, tuple[str, ...]]:
    """Split an aggregate argument into its base term and the Fld access path."""
    fields: list[str] = []
    while True:
        match e:
            case A.Flatten(a):
                e = a
            case A.Fld(x, a):
                fields.append(x)
                e = a
            case _:
                return e, tuple(reversed(fields))


def eval_refinement(q: A.Expr, env: dict[str, Value], structs: A.StructTable, nu: Value | None = None,
                    preds: Callable[[A.PredApp], bool] | None = None):
    """Evaluate a refinement with mathematical arithmetic and concrete aggregates."""

    def go(e: A.Expr):
        match e:
            case A.Nat(n):
                return n
            case A.BoolLit(b):
                return b
            case A.MaxInt():
                return A.MAX_INT
            case A.Nu():
                return nu
            case A.Var(name):
                return env[name]
            case A.Not(a):
                return not go(a)
            case A.Sum(a):
                base, path = aggregate_path(a)
                return const_sum(path, go(base))
            case A.Index(m, k):
                return go(m).get(go(k), structs)
            case A.Field(s, x):
                return go(s).get(x)
            case A.Update(m, k, v):
                return go(m).set(go(k), go(v))
            case A.FieldUpdate(s, x, v):
                return go(s).set(x, go(v))
            case A.PredApp():
                return True if preds is None else preds(e)
            case A.BinOp(op, l, r):
                a, b = go(l), go(r)
                match op:
                    case "+":
                        return a + b
                    case "-":
                        return a - b
                    case "*":
                        return a * b
                    case "/":
                        return a // b if b else 0
                    case "<":
                        return a < b
                    case "<=":
                        return a <= b
                    case ">":
                        return a > b
                    case ">=":
                        return a >= b
                    case "==":
                        return values_equal(a, b, structs)
                    case "!=":
                        return not values_equal(a, b, structs)
                    case "&&":
                        return a and b
                    case "||":
                        return a or b
            case A.StructLit(name, fields):
                return StructV(name, tuple((f, go(x)) for f, x in fields))
            case A.MapLit(vt, entries):
                out = MapV(vt, ())
                for k, x in entries:
                    out = out.set(k, go(x))
                return out
        raise TypeError(f"cannot evaluate {type(e).__name__} in a refinement")

    return go(q)
