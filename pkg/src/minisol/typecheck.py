"""Refinement typing as constraint generation.

Each function body is walked once in evaluation order. Every judgment that
needs a subtyping or validity check becomes an `Obligation`: arithmetic-safety
checks are soft, everything else (asserts, commits, joins, loop invariants,
call arguments, returns, let annotations) is hard. Obligations carry a
snapshot of the environment, guards, path facts and the safety predicates of
earlier arithmetic sites in the same function.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from . import ast as A
from .errors import JoinLockMismatch, LockViolation, SortError, UnboundVariable
from .sorts import sort_of
from .templates import bound_terms, fill, template_family
from .values import const_sum, const_value

TRUE = A.BoolLit(True)


class Lock(Enum):
    UNLOCKED = "Unlocked"
    LOCKED = "Locked"


class Mode(Enum):
    CHECK = "check"
    INFER = "infer"


@dataclass(frozen=True)
class Binding:
    """x : {base | qual}; `qual` mentions the value variable as Nu."""

    name: str
    base: A.BaseType
    qual: A.Expr = TRUE


@dataclass(frozen=True)
class UnknownPred:
    """Placeholder refinement p(args); `sorts` are the base sorts of the arguments."""

    name: str
    sorts: tuple[A.BaseType, ...]
    owner: str


@dataclass(frozen=True)
class Obligation:
    fn: str
    seq: int
    kind: str  # "hard" | "soft"
    label: str  # arithmetic operator for soft; rule name for hard
    loc: A.SourceLoc | None
    env: tuple[Binding, ...]
    guards: tuple[A.Expr, ...]
    facts: tuple[A.Expr, ...]
    prior: tuple[A.Expr, ...]
    lock: Lock
    base: A.BaseType
    lhs: A.Expr
    consequent: A.Expr
    target: str = ""

    @property
    def soft(self) -> bool:
        return self.kind == "soft"

    @property
    def site(self) -> tuple[str, int, int, str]:
        line, col = (self.loc.line, self.loc.col) if self.loc else (0, 0)
        return (self.fn, line, col, self.label)

    def has_unknowns(self) -> bool:
        parts = [b.qual for b in self.env] + [self.lhs, self.consequent]
        return any(isinstance(n, A.PredApp) for p in parts for n in A.walk(p))

    def consequent_has_unknowns(self) -> bool:
        return any(isinstance(n, A.PredApp) for n in A.walk(self.consequent))


@dataclass
class ConstraintSet:
    contract: A.Contract
    mode: Mode
    obligations: list[Obligation]
    preds: dict[str, UnknownPred]
    nested: bool = True
    function_order: list[str] = field(default_factory=list)

    @property
    def hard(self) -> list[Obligation]:
        return [o for o in self.obligations if not o.soft]

    @property
    def soft(self) -> list[Obligation]:
        return [o for o in self.obligations if o.soft]

    def precedes(self, a: Obligation, b: Obligation) -> bool:
        """The evaluation-order relation on soft obligations (same function, earlier seq)."""
        return a.fn == b.fn and a.seq < b.seq

    def ordered_soft(self) -> list[Obligation]:
        rank = {f: i for i, f in enumerate(self.function_order)}
        return sorted(self.soft, key=lambda o: (rank.get(o.fn, len(rank)), o.seq))


@dataclass
class _State:
    env: list[Binding]
    guards: list[A.Expr]
    facts: list[A.Expr]
    prior: list[A.Expr]
    lock: Lock

    def copy(self) -> "_State":
        return _State(list(self.env), list(self.guards), list(self.facts), list(self.prior), self.lock)


def safety_predicate(op: str, left: A.Expr, right: A.Expr) -> A.Expr:
    """The condition under which `left op right` stays within machine range."""
    match op:
        case "+":
            return A.BinOp("<=", A.BinOp("+", left, right), A.MaxInt())
        case "-":
            return A.BinOp("<=", right, left)
        case "*":
            return A.BinOp("<=", A.BinOp("*", left, right), A.MaxInt())
        case "/":
            return A.BinOp(">", right, A.Nat(0))
    raise ValueError(op)


def eq(a: A.Expr, b: A.Expr) -> A.Expr:
    return A.BinOp("==", a, b)


def implies(a: A.Expr, b: A.Expr) -> A.Expr:
    return A.BinOp("||", A.Not(a), b)


class Checker:
    """Constraint generator for one contract."""

    def __init__(self, contract: A.Contract, mode: Mode = Mode.CHECK, nested: bool = True):
        self.c = contract
        self.mode = mode
        self.nested = nested
        self.structs = contract.struct_table()
        self.funs = {f.name: f for f in contract.functions}
        self.preds: dict[str, UnknownPred] = {}
        self.sv_names = [sv.name for sv in contract.state_vars]
        self.sv_types: dict[str, A.RefType] = {}
        for k, sv in enumerate(contract.state_vars, start=1):
            qual = sv.type.qual
            if qual is None:
                if mode is Mode.INFER:
                    name = f"I_{k}"
                    sorts = tuple(s.type.base for s in contract.state_vars)
                    self.preds[name] = UnknownPred(name, sorts, sv.name)
                    args = tuple(A.Nu() if s.name == sv.name else A.Var(s.name) for s in contract.state_vars)
                    qual = A.PredApp(name, args)
                else:
                    qual = TRUE
            self.sv_types[sv.name] = A.RefType(sv.type.base, qual)

    # ------------------------------------------------------------ entry

    def generate(self) -> ConstraintSet:
        obligations: list[Obligation] = []
        order = []
        for f in self.c.all_functions():
            obligations += self.function(f)
            order.append(f.name)
        return ConstraintSet(self.c, self.mode, obligations, dict(self.preds), self.nested, order)

    # ------------------------------------------------------------ helpers

    def family(self, value_sort: A.BaseType):
        return template_family(value_sort, self.structs, self.nested)

    def env_sorts(self) -> dict[str, A.BaseType]:
        return {b.name: b.base for b in self.st.env}

    def sort(self, e: A.Expr) -> A.BaseType:
        return sort_of(e, self.env_sorts(), self.structs)

    def bind(self, name: str, base: A.BaseType, qual: A.Expr | None) -> None:
        self.st.env.append(Binding(name, base, TRUE if qual is None else qual))

    def emit(self, kind: str, label: str, loc, base, lhs, consequent, target: str = "") -> Obligation:
        st = self.st
        ob = Obligation(
            self.fn.name, self.seq, kind, label, loc,
            tuple(st.env), tuple(st.guards), tuple(st.facts), tuple(st.prior), st.lock,
            base, lhs, consequent, target,
        )
        self.seq += 1
        self.out.append(ob)
        return ob

    def subtype(self, label: str, loc, base, lhs: A.Expr, consequent: A.Expr, target: str = "") -> None:
        self.emit("hard", label, loc, base, lhs, consequent, target)

    def exact(self, e: A.Expr, base: A.BaseType, extra: list[A.Expr]) -> A.Expr:
        parts = [] if base == A.UNIT else [eq(A.Nu(), e)]
        return A.conj(parts + extra)

    # ------------------------------------------------------------ expressions

    def expr(self, e: A.Expr) -> tuple[A.Expr, A.BaseType, list[A.Expr]]:
        """Type `e` in the current state.

        Returns (e', base, extra) where e' is `e` with havocs replaced by fresh
        variables and extra are the rule-specific conjuncts (over Nu) of the
        synthesized type beyond `Nu == e'`. Facts about subterms are pushed onto
        the path facts, soft obligations are emitted in evaluation order.
        """
        e2, base, extra = self._expr(e)
        for q in extra:
            self.st.facts.append(A.substitute(q, {}, nu=e2))
        return e2, base, extra

    def _expr(self, e: A.Expr) -> tuple[A.Expr, A.BaseType, list[A.Expr]]:
        match e:
            case A.Nat() | A.BoolLit() | A.UnitLit():
                return e, self.sort(e), []
            case A.Var(name):
                for b in reversed(self.st.env):
                    if b.name == name:
                        return e, b.base, []
                raise UnboundVariable(f"unbound variable {name}", e.loc)
            case A.Havoc(t):
                name = f"havoc!{self.havocs}"
                self.havocs += 1
                self.bind(name, t, None)
                return A.Var(name, loc=e.loc), t, []
            case A.BinOp(op, l, r):
                l2, _, _ = self.expr(l)
                r2, _, _ = self.expr(r)
                out = A.BinOp(op, l2, r2, loc=e.loc)
                base = self.sort(out)
                if op in A.ARITH_OPS:
                    consequent = safety_predicate(op, l2, r2)
                    self.emit("soft", op, e.loc, A.UINT, TRUE, consequent)
                    if consequent not in self.st.prior:
                        self.st.prior.append(consequent)
                if op == "/":
                    nu = A.Nu()
                    return out, base, [
                        A.BinOp("<=", A.BinOp("*", r2, nu), l2),
                        A.BinOp("<", l2, A.BinOp("*", A.BinOp("+", nu, A.Nat(1)), r2)),
                    ]
                return out, base, []
            case A.Not(a):
                a2, _, _ = self.expr(a)
                return A.Not(a2, loc=e.loc), A.BOOL, []
            case A.Index(m, k):
                m2, mt, _ = self.expr(m)
                k2, _, _ = self.expr(k)
                out = A.Index(m2, k2, loc=e.loc)
                vt = mt.value
                extra = [A.BinOp("<=", fill(f.inner.term, A.Nu()), fill(f.outer.term, m2)) for f in self.family(vt)]
                extra += bound_terms(A.Nu(), vt, self.structs, self.nested)
                return out, vt, extra
            case A.Update(m, k, v):
                m2, mt, _ = self.expr(m)
                k2, _, _ = self.expr(k)
                v2, _, _ = self.expr(v)
                out = A.Update(m2, k2, v2, loc=e.loc)
                old = A.Index(m2, k2)
                extra = [
                    eq(fill(f.outer.term, A.Nu()),
                       A.BinOp("+", A.BinOp("-", fill(f.outer.term, m2), fill(f.inner.term, old)), fill(f.inner.term, v2)))
                    for f in self.family(mt.value)
                ]
                return out, mt, extra
            case A.Field(s, x):
                s2, _, _ = self.expr(s)
                out = A.Field(s2, x, loc=e.loc)
                ft = self.sort(out)
                return out, ft, bound_terms(A.Nu(), ft, self.structs, self.nested)
            case A.FieldUpdate(s, x, v):
                s2, st, _ = self.expr(s)
                v2, _, _ = self.expr(v)
                return A.FieldUpdate(s2, x, v2, loc=e.loc), st, []
            case A.StructLit(name, fields):
                vals = tuple((f, self.expr(x)[0]) for f, x in fields)
                return A.StructLit(name, vals, loc=e.loc), A.StructType(name), []
            case A.MapLit(t, entries):
                vals = tuple((k, self.expr(x)[0]) for k, x in entries)
                out = A.MapLit(t, vals, loc=e.loc)
                return out, A.MapType(t), self.map_const_aggregates(out)
        raise SortError(f"unsupported program expression {type(e).__name__}", getattr(e, "loc", None))

    def map_const_aggregates(self, m: A.MapLit) -> list[A.Expr]:
        """H1(Nu) == aggregate, for every family member of the map constant's value sort."""
        value = const_value(m, self.structs)
        out = []
        for f in self.family(m.value_type):
            lhs = fill(f.outer.term, A.Nu())
            if value is not None:
                out.append(eq(lhs, A.Nat(const_sum(f.path, value))))
            else:
                total: A.Expr = A.Nat(0)
                for _, x in m.entries:
                    total = A.BinOp("+", total, fill(f.inner.term, x))
                out.append(eq(lhs, total))
        return out

    # ------------------------------------------------------------ statements

    def function(self, f: A.FunDecl) -> list[Obligation]:
        self.fn = f
        self.seq = 0
        self.havocs = 0
        self.out: list[Obligation] = []
        lock = Lock.LOCKED if f.name == A.CTOR else Lock.UNLOCKED
        self.st = _State([], [], [], [], lock)
        self.bind(A.SENDER, A.UINT, None)
        for p in f.params:
            self.bind(p.name, p.type.base, p.type.qual)
        self.stmt(f.body)
        if self.st.lock is not Lock.UNLOCKED:
            raise LockViolation(f"function {f.name} ends without committing state", f.loc)
        r2, rbase, extra = self.expr(f.result)
        if f.ret.qual is not None:
            self.subtype("return", f.result.loc or f.loc, rbase, self.exact(r2, rbase, extra), f.ret.qual)
        return self.out

    def stmt(self, s: A.Stmt) -> None:
        match s:
            case A.Seq(a, b):
                self.stmt(a)
                self.stmt(b)
            case A.Skip():
                pass
            case A.Let(name, typ, value):
                v2, base, extra = self.expr(value)
                if extra:
                    # the binding below carries these conjuncts already
                    del self.st.facts[-len(extra):]
                lhs = self.exact(v2, base, extra)
                if typ.qual is not None and typ.qual != TRUE:
                    self.subtype("let-annot", s.loc, base, lhs, typ.qual, name)
                self.bind(name, base, lhs)
            case A.Assume(cond):
                c2, _, _ = self.expr(cond)
                self.st.guards.append(c2)
            case A.Assert(cond):
                c2, _, _ = self.expr(cond)
                self.subtype("assert", s.loc, A.BOOL, TRUE, c2)
            case A.Fetch(bindings):
                if self.st.lock is not Lock.UNLOCKED:
                    raise LockViolation("fetch while state is locked", s.loc)
                rename = {sv: A.Var(local) for sv, local in bindings}
                for sv, local in bindings:
                    t = self.sv_types[sv]
                    self.bind(local, t.base, A.substitute(t.qual, rename))
                self.st.lock = Lock.LOCKED
            case A.Commit(writes):
                if self.st.lock is not Lock.LOCKED:
                    raise LockViolation("commit while state is unlocked", s.loc)
                typed = [(self.expr(e), sv) for e, sv in writes]
                values = {sv: e2 for (e2, _, _), sv in typed}
                for (e2, base, extra), sv in typed:
                    t = self.sv_types[sv]
                    target = dict(values)
                    target[sv] = A.Nu()
                    self.subtype("commit", s.loc, base, self.exact(e2, base, extra), A.substitute(t.qual, target), sv)
                self.st.lock = Lock.UNLOCKED
            case A.Call(target, typ, func, args):
                self.call(s, target, typ, func, args)
            case A.If(cond, then, orelse, join):
                self.if_stmt(s, cond, then, orelse, join)
            case A.While(join, cond, body):
                self.while_stmt(s, join, cond, body)
            case _:
                raise TypeError(s)

    def call(self, s, target, typ, func, args) -> None:
        callee = self.funs[func]
        if self.st.lock is not Lock.UNLOCKED and not callee.pure:
            raise LockViolation(f"call to {func} while state is locked", s.loc)
        typed = [self.expr(a) for a in args]
        actuals = {p.name: e2 for p, (e2, _, _) in zip(callee.params, typed)}
        for p, (e2, base, extra) in zip(callee.params, typed):
            if p.type.qual is None:
                continue
            subst = dict(actuals)
            subst[p.name] = A.Nu()
            self.subtype("call-arg", s.loc, base, self.exact(e2, base, extra), A.substitute(p.type.qual, subst), p.name)
        ret = TRUE if callee.ret.qual is None else A.substitute(callee.ret.qual, actuals)
        if typ.qual is not None and typ.qual != TRUE:
            self.subtype("call-annot", s.loc, typ.base, ret, typ.qual, target)
            ret = A.conj([ret, typ.qual])
        self.bind(target, typ.base, ret)

    def phi_type(self, p: A.Phi, scope: list[Binding]) -> A.Expr:
        if p.type.qual is not None:
            return p.type.qual
        if self.mode is Mode.CHECK:
            return TRUE
        name = f"P_{self.fn.name}_{p.name}"
        visible = [b for b in scope]
        self.preds[name] = UnknownPred(name, tuple(b.base for b in visible) + (p.type.base,), p.name)
        return A.PredApp(name, tuple(A.Var(b.name) for b in visible) + (A.Nu(),))

    def join_obligations(self, label: str, join, quals, side: str, loc) -> None:
        names = {p.name: A.Var(getattr(p, side)) for p in join}
        for p, q in zip(join, quals):
            src = A.Var(getattr(p, side))
            self.subtype(label, p.loc or loc, p.type.base, eq(A.Nu(), src), A.substitute(q, names), p.name)

    def if_stmt(self, s, cond, then, orelse, join) -> None:
        c2, _, _ = self.expr(cond)
        pre = self.st.copy()
        outer = {b.name for b in pre.env}
        quals = [self.phi_type(p, pre.env) for p in join]

        self.st = pre.copy()
        self.st.guards.append(c2)
        self.stmt(then)
        self.join_obligations("join", join, quals, "left", s.loc)
        left = self.st

        self.st = pre.copy()
        self.st.guards.append(A.Not(c2))
        self.stmt(orelse)
        self.join_obligations("join", join, quals, "right", s.loc)
        right = self.st

        if left.lock is not right.lock:
            raise JoinLockMismatch(
                f"branches end with different lock states ({left.lock.value} vs {right.lock.value})", s.loc)

        self.st = pre.copy()
        self.st.lock = left.lock
        for branch, guard in ((left, c2), (right, A.Not(c2))):
            for p in branch.prior[len(pre.prior):]:
                if A.free_vars(p) <= outer and implies(guard, p) not in self.st.prior:
                    self.st.prior.append(implies(guard, p))
        for p, q in zip(join, quals):
            self.bind(p.name, p.type.base, q)

    def while_stmt(self, s, join, cond, body) -> None:
        pre = self.st
        quals = [self.phi_type(p, pre.env) for p in join]
        self.join_obligations("loop-entry", join, quals, "left", s.loc)

        for p, q in zip(join, quals):
            self.bind(p.name, p.type.base, q)
        c2, _, _ = self.expr(cond)
        head = self.st.copy()

        self.st = head.copy()
        self.st.guards.append(c2)
        self.stmt(body)
        if self.st.lock is not head.lock:
            raise JoinLockMismatch("loop body changes the lock state", s.loc)
        self.join_obligations("loop-preserve", join, quals, "right", s.loc)

        self.st = head
        self.st.guards.append(A.Not(c2))


def generate_constraints(contract: A.Contract, mode: Mode = Mode.CHECK, nested: bool = True) -> ConstraintSet:
    """Obligations for the constructor and every function, in declaration order."""
    return Checker(contract, mode, nested).generate()


def with_sigma(ob: Obligation, sigma_subst) -> Obligation:
    """Replace unknown predicate applications using `sigma_subst(PredApp) -> Expr`."""

    def sub(e: A.Expr) -> A.Expr:
        return _replace_preds(e, sigma_subst)

    return replace(
        ob,
        env=tuple(replace(b, qual=sub(b.qual)) for b in ob.env),
        lhs=sub(ob.lhs),
        consequent=sub(ob.consequent),
    )


def _replace_preds(e: A.Expr, fn) -> A.Expr:
    match e:
        case A.PredApp():
            return fn(e)
        case A.BinOp(op, l, r):
            return A.BinOp(op, _replace_preds(l, fn), _replace_preds(r, fn), loc=e.loc)
        case A.Not(a):
            return A.Not(_replace_preds(a, fn), loc=e.loc)
    return e
