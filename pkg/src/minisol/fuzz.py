"""Randomized soundness checking of verdicts against the interpreter.

A campaign constructs the contract and runs a random sequence of calls, with
runtime checks kept exactly at the NEEDS_CHECK sites. Four properties are
checked on every execution:

    (a) no SAFE site records an overflow or division event,
    (b) every map update satisfies the aggregate update equation for each
        family member of the map's sort,
    (c) every commit satisfies the state-variable annotations and the
        inferred invariants, evaluated with concrete aggregates,
    (d) an aborted transaction leaves the store unchanged.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import ast as A
from .inference import Report
from .interpreter import Aborted, Completed, Interpreter, Site, eval_refinement
from .logic import TRUE_T
from .solver import eval_term
from .templates import template_family
from .values import UNIT_V, MapV, StructV, Value, const_sum


@dataclass(frozen=True)
class FuzzConfig:
    runs: int = 1000
    max_calls: int = 6
    seed: int = 0
    nested: bool = True


@dataclass(frozen=True)
class Violation:
    prop: str  # a | b | c | d
    run: int
    detail: str


@dataclass
class FuzzStats:
    runs: int = 0
    calls: int = 0
    completed: int = 0
    aborted: int = 0
    events: int = 0
    updates: int = 0
    commits: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


SENDERS = 4


def draw_sender(rng: random.Random) -> int:
    return rng.randrange(SENDERS)


def draw_uint(rng: random.Random) -> int:
    """Small keys collide often; huge values exercise the overflow paths."""
    r = rng.random()
    if r < 0.55:
        return rng.randint(0, 5)
    if r < 0.75:
        return rng.randint(0, 2**64)
    if r < 0.9:
        return A.MAX_INT - rng.randint(0, 5)
    return rng.randint(0, A.MAX_INT)


def draw_value(t: A.BaseType, structs: A.StructTable, rng: random.Random) -> Value:
    match t:
        case A.UIntType():
            return draw_uint(rng)
        case A.BoolType():
            return rng.random() < 0.5
        case A.MapType(v):
            out = MapV(v, ())
            for _ in range(rng.randint(0, 2)):
                out = out.set(rng.randint(0, 5), draw_value(v, structs, rng))
            return out
        case A.StructType(name):
            return StructV(name, tuple((f, draw_value(ft, structs, rng)) for f, ft in structs[name].fields))
    return UNIT_V


def slot_values(c: A.Contract, store: dict[str, Value], nested: bool = True) -> list:
    """Concrete values of the invariant predicate slots, in declaration order."""
    structs = c.struct_table()

    def slots(t: A.BaseType, v: Value) -> list:
        match t:
            case A.UnitType():
                return []
            case A.UIntType():
                return [Fraction(v)]
            case A.BoolType():
                return [v]
            case A.StructType(name):
                return [x for f, ft in structs[name].fields for x in slots(ft, v.get(f))]
            case A.MapType(vt):
                return [Fraction(const_sum(m.path, v)) for m in template_family(vt, structs, nested)]
        raise TypeError(t)

    return [x for sv in c.state_vars for x in slots(sv.type.base, store[sv.name])]


class _Checker:
    """Interpreter observer for properties (b) and (c)."""

    def __init__(self, c: A.Contract, sigma: dict, nested: bool, stats: FuzzStats):
        self.c = c
        self.structs = c.struct_table()
        self.sigma = {p: e for p, e in sigma.items() if e[1] != TRUE_T}
        self.nested = nested
        self.stats = stats
        self.run = 0

    def fail(self, prop: str, detail: str) -> None:
        self.stats.violations.append(Violation(prop, self.run, detail))

    def on_update(self, fn, map_type, before, key, value, after) -> None:
        self.stats.updates += 1
        for m in template_family(map_type.value, self.structs, self.nested):
            old = const_sum(m.path, before)
            entry = const_sum(m.path, before.get(key, self.structs))
            new = const_sum(m.path, value)
            if const_sum(m.path, after) != old - entry + new:
                self.fail("b", f"{fn}: update equation fails for path {'.'.join(m.path) or 'ε'}")

    def on_commit(self, fn, store) -> None:
        self.stats.commits += 1
        for sv in self.c.state_vars:
            q = sv.type.qual
            if q is not None and not eval_refinement(q, store, self.structs, nu=store[sv.name]):
                self.fail("c", f"{fn}: annotation of {sv.name} violated")
        if self.sigma:
            vals = slot_values(self.c, store, self.nested)
            for p, (formals, body) in sorted(self.sigma.items()):
                if not eval_term(body, dict(zip(formals, vals))):
                    self.fail("c", f"{fn}: inferred {p} violated")


def fuzz(c: A.Contract, report: Report, cfg: FuzzConfig = FuzzConfig(), sigma: dict | None = None) -> FuzzStats:
    """Run `cfg.runs` random campaigns with runtime checks at the NEEDS_CHECK sites.

    Invariants are taken from the report unless `sigma` is given.
    """
    structs = c.struct_table()
    safe: set[Site] = {(v.function, v.line, v.column, v.op) for v in report.verdicts if v.safe}
    guarded = frozenset((v.function, v.line, v.column, v.op) for v in report.verdicts if not v.safe)
    stats = FuzzStats()
    checker = _Checker(c, report.sigma_entries if sigma is None else sigma, cfg.nested, stats)
    public = [f for f in c.functions if not f.pure] or list(c.functions)
    for run in range(cfg.runs):
        rng = random.Random(cfg.seed * 1_000_003 + run)
        checker.run = run
        interp = Interpreter(c, random.Random(rng.random()), guarded, observer=checker)
        stats.runs += 1
        # constructor arguments are mostly addresses drawn from the sender pool
        ctor_args = [draw_sender(rng) if p.type.base == A.UINT and rng.random() < 0.8
                     else draw_value(p.type.base, structs, rng) for p in (c.ctor.params if c.ctor else ())]
        outcome = interp.construct(ctor_args, draw_sender(rng))
        _events(stats, checker, safe, outcome)
        if not isinstance(outcome, Completed):
            continue
        store = outcome.store
        for _ in range(rng.randint(1, cfg.max_calls)):
            f = rng.choice(public)
            args = [draw_value(p.type.base, structs, rng) for p in f.params]
            snapshot = dict(store)
            out = interp.run_function(f.name, args, store, draw_sender(rng))
            stats.calls += 1
            _events(stats, checker, safe, out)
            match out:
                case Completed(new_store, _, _):
                    stats.completed += 1
                    store = new_store
                case Aborted():
                    stats.aborted += 1
                    if store != snapshot:
                        checker.fail("d", f"{f.name}: store changed by an aborted call")
    return stats


def _events(stats: FuzzStats, checker: _Checker, safe: set[Site], outcome) -> None:
    for ev in outcome.events:
        stats.events += 1
        if ev.site in safe:
            checker.fail("a", f"event {ev.kind} at SAFE site {ev.site}")
