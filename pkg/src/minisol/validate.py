"""Structural well-formedness checks and constant folding."""

from __future__ import annotations

from . import ast as A
from .errors import ConstantOverflow, Diagnostic, MiniSolError, ValidationError
from .sorts import check_base, sort_of

_REFINEMENT_ONLY = (A.Nu, A.Sum, A.Fld, A.Flatten, A.MaxInt, A.Hole, A.PredApp)


def struct_cycle(structs: A.StructTable) -> list[str] | None:
    """Return a cycle of struct names if the struct reference graph has one."""

    def refs(t: A.BaseType) -> list[str]:
        match t:
            case A.StructType(n):
                return [n]
            case A.MapType(v):
                return refs(v)
        return []

    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        if state.get(n) == 1:
            return stack[stack.index(n):] + [n]
        if state.get(n) == 2 or n not in structs:
            return None
        state[n] = 1
        stack.append(n)
        for _, ft in structs[n].fields:
            for r in refs(ft):
                cyc = visit(r)
                if cyc:
                    return cyc
        stack.pop()
        state[n] = 2
        return None

    for name in sorted(structs):
        cyc = visit(name)
        if cyc:
            return cyc
    return None


class _Validator:
    def __init__(self, c: A.Contract):
        self.c = c
        self.structs = c.struct_table()
        self.diags: list[Diagnostic] = []
        self.sv_sorts = {sv.name: sv.type.base for sv in c.state_vars}
        self.funs = {f.name: f for f in c.functions}

    def report(self, loc, code: str, message: str) -> None:
        self.diags.append(Diagnostic(loc, code, message))

    def guard(self, fn, *args):
        try:
            return fn(*args)
        except MiniSolError as err:
            self.report(err.loc, err.code, err.message)
            return None

    # -- declarations

    def run(self) -> list[Diagnostic]:
        c = self.c
        self.unique([s.name for s in c.structs], [s.loc for s in c.structs], "struct")
        self.unique([sv.name for sv in c.state_vars], [sv.loc for sv in c.state_vars], "state variable")
        self.unique([f.name for f in c.functions], [f.loc for f in c.functions], "function")
        for s in c.structs:
            self.unique([f for f, _ in s.fields], [s.loc] * len(s.fields), f"field of {s.name}")
            for _, ft in s.fields:
                self.guard(check_base, ft, self.structs, s.loc)
        cyc = struct_cycle(self.structs)
        if cyc:
            decl = self.structs[cyc[0]]
            self.report(decl.loc, "RecursiveStruct", "recursive struct types are not allowed: " + " -> ".join(cyc))
            return self.diags
        for sv in c.state_vars:
            self.guard(check_base, sv.type.base, self.structs, sv.loc)
            self.binder_name(sv.name, sv.loc)
            if sv.type.qual is not None:
                self.qualifier(sv.type, dict(self.sv_sorts), sv.loc)
        if c.ctor is not None:
            if c.ctor.pure:
                self.report(c.ctor.loc, "PureConstructor", "constructor cannot be pure")
            self.function(c.ctor)
        for f in c.functions:
            self.function(f)
        return self.diags

    def unique(self, names, locs, what: str) -> None:
        seen: dict[str, object] = {}
        for n, loc in zip(names, locs):
            if n in seen:
                self.report(loc, "Duplicate", f"duplicate {what} {n} (first declared at {seen[n]})")
            else:
                seen[n] = loc

    def binder_name(self, name: str, loc) -> None:
        if name == "v":
            self.report(loc, "ReservedName", "v is reserved for the refinement value variable")

    def qualifier(self, t: A.RefType, scope: dict[str, A.BaseType], loc) -> None:
        q = t.qual
        if q is None:
            return
        for node in A.walk(q):
            if isinstance(node, A.Havoc):
                self.report(node.loc or loc, "HavocInRefinement", "havoc is not allowed inside refinements")
                return
        s = self.guard(sort_of, q, scope, self.structs, t.base)
        if s is not None and s != A.BOOL:
            self.report(q.loc or loc, "SortError", f"refinement must be boolean, found {s}")

    def program_expr(self, e: A.Expr, scope: dict[str, A.BaseType]) -> A.BaseType | None:
        for node in A.walk(e):
            if isinstance(node, _REFINEMENT_ONLY):
                self.report(node.loc or e.loc, "RefinementTermInProgram",
                            f"refinement-only term {type(node).__name__} used in program expression")
                return None
            if isinstance(node, A.Nat) and node.value > A.MAX_INT:
                self.report(node.loc, "ConstantRange", f"constant {node.value} exceeds MaxInt")
        return self.guard(sort_of, e, scope, self.structs)

    def expect_sort(self, e: A.Expr, scope, want: A.BaseType, what: str) -> None:
        got = self.program_expr(e, scope)
        if got is not None and got != want:
            self.report(e.loc, "SortError", f"{what}: expected {want} but found {got}")

    # -- functions

    def function(self, f: A.FunDecl) -> None:
        self.declared: dict[str, object] = {}
        self.fn = f
        scope: dict[str, A.BaseType] = {A.SENDER: A.UINT}
        self.declared[A.SENDER] = f.loc
        for p in f.params:
            self.guard(check_base, p.type.base, self.structs, p.loc)
            self.bind(p.name, p.loc, scope, p.type.base)
            self.qualifier(p.type, dict(scope), p.loc)
        self.guard(check_base, f.ret.base, self.structs, f.loc)
        if f.name == A.CTOR and f.ret.base != A.UNIT:
            self.report(f.loc, "SortError", "constructor returns unit")
        params_scope = dict(scope)
        scope = self.stmt(f.body, scope)
        if scope is None:
            return
        self.expect_sort(f.result, scope, f.ret.base, f"return value of {f.name}")
        self.qualifier(f.ret, params_scope, f.loc)

    def bind(self, name: str, loc, scope: dict, sort: A.BaseType) -> None:
        self.binder_name(name, loc)
        if name in self.sv_sorts:
            self.report(loc, "ShadowsStateVariable", f"local {name} shadows a state variable")
        if name in self.declared:
            self.report(loc, "SSAViolation",
                        f"variable {name} redeclared at {loc} (first declared at {self.declared[name]})")
        else:
            self.declared[name] = loc
        scope[name] = sort

    def state_var_list(self, names: list[str], loc, what: str) -> None:
        expected = [sv.name for sv in self.c.state_vars]
        if sorted(names) != sorted(expected) or len(set(names)) != len(names):
            self.report(loc, "IncompleteStateAccess",
                        f"{what} must list every state variable exactly once ({', '.join(expected)})")

    def stmt(self, s: A.Stmt, scope: dict) -> dict | None:
        match s:
            case A.Seq(a, b):
                scope = self.stmt(a, scope)
                return self.stmt(b, scope) if scope is not None else None
            case A.Skip():
                return scope
            case A.Let(name, typ, value):
                self.guard(check_base, typ.base, self.structs, s.loc)
                self.expect_sort(value, scope, typ.base, f"let {name}")
                self.qualifier(typ, dict(scope), s.loc)
                scope = dict(scope)
                self.bind(name, s.loc, scope, typ.base)
                return scope
            case A.Assume(cond) | A.Assert(cond):
                self.expect_sort(cond, scope, A.BOOL, "condition")
                return scope
            case A.Fetch(bindings):
                if self.fn.pure:
                    self.report(s.loc, "ImpureAccess", "pure functions cannot fetch state")
                self.state_var_list([sv for sv, _ in bindings], s.loc, "fetch")
                scope = dict(scope)
                for sv, local in bindings:
                    self.bind(local, s.loc, scope, self.sv_sorts.get(sv, A.UNIT))
                return scope
            case A.Commit(writes):
                if self.fn.pure:
                    self.report(s.loc, "ImpureAccess", "pure functions cannot commit state")
                self.state_var_list([sv for _, sv in writes], s.loc, "commit")
                for e, sv in writes:
                    if sv in self.sv_sorts:
                        self.expect_sort(e, scope, self.sv_sorts[sv], f"commit to {sv}")
                return scope
            case A.Call(target, typ, func, args):
                callee = self.funs.get(func)
                scope = dict(scope)
                if callee is None:
                    self.report(s.loc, "UnknownFunction", f"unknown function {func}")
                    self.bind(target, s.loc, scope, typ.base)
                    return scope
                if self.fn.pure and not callee.pure:
                    self.report(s.loc, "ImpureAccess", f"pure function calls non-pure {func}")
                if len(args) != len(callee.params):
                    self.report(s.loc, "Arity", f"{func} expects {len(callee.params)} arguments, got {len(args)}")
                for a, p in zip(args, callee.params):
                    self.expect_sort(a, scope, p.type.base, f"argument {p.name} of {func}")
                if typ.base != callee.ret.base:
                    self.report(s.loc, "SortError", f"call result declared {typ.base} but {func} returns {callee.ret.base}")
                self.qualifier(typ, dict(scope), s.loc)
                self.bind(target, s.loc, scope, typ.base)
                return scope
            case A.If(cond, then, orelse, join):
                self.expect_sort(cond, scope, A.BOOL, "if condition")
                s1 = self.stmt(then, dict(scope))
                s2 = self.stmt(orelse, dict(scope))
                if s1 is None or s2 is None:
                    return None
                return self.join(join, scope, s1, s2, s.loc)
            case A.While(join, cond, body):
                head = dict(scope)
                for p in join:
                    self.phi_source(p.left, scope, p)
                    self.guard(check_base, p.type.base, self.structs, p.loc)
                    self.bind(p.name, p.loc, head, p.type.base)
                for p in join:
                    self.qualifier(p.type, dict(head), p.loc)
                self.expect_sort(cond, head, A.BOOL, "loop condition")
                end = self.stmt(body, dict(head))
                if end is None:
                    return None
                for p in join:
                    self.phi_source(p.right, end, p)
                return head
        raise TypeError(s)

    def phi_source(self, name: str, scope: dict, p: A.Phi) -> None:
        if name not in scope:
            self.report(p.loc, "UnboundVariable", f"phi source {name} for {p.name} is not in scope")
        elif scope[name] != p.type.base:
            self.report(p.loc, "SortError", f"phi source {name} has sort {scope[name]}, expected {p.type.base}")

    def join(self, join, scope, s1, s2, loc) -> dict:
        out = dict(scope)
        for p in join:
            self.phi_source(p.left, s1, p)
            self.phi_source(p.right, s2, p)
            self.guard(check_base, p.type.base, self.structs, p.loc)
            self.bind(p.name, p.loc, out, p.type.base)
        for p in join:
            self.qualifier(p.type, dict(out), p.loc)
        return out


def validate(c: A.Contract) -> list[Diagnostic]:
    """Return diagnostics; the list is empty iff the contract is well formed."""
    return _Validator(c).run()


def check(c: A.Contract) -> A.Contract:
    """validate() that raises ValidationError on the first problem set."""
    diags = validate(c)
    if diags:
        raise ValidationError(diags)
    return c


# ------------------------------------------------------------ constant folding


def fold_expr(e: A.Expr) -> A.Expr:
    match e:
        case A.BinOp(op, l, r) if op in A.ARITH_OPS:
            l, r = fold_expr(l), fold_expr(r)
            if isinstance(l, A.Nat) and isinstance(r, A.Nat):
                a, b = l.value, r.value
                match op:
                    case "+":
                        n = a + b
                    case "-":
                        n = a - b
                    case "*":
                        n = a * b
                    case "/":
                        if b == 0:
                            return A.BinOp(op, l, r, loc=e.loc)
                        n = a // b
                if n < 0 or n > A.MAX_INT:
                    raise ConstantOverflow(f"constant expression {a} {op} {b} is out of range", e.loc)
                return A.Nat(n, loc=e.loc)
            return A.BinOp(op, l, r, loc=e.loc)
        case A.BinOp(op, l, r):
            return A.BinOp(op, fold_expr(l), fold_expr(r), loc=e.loc)
        case A.Not(a):
            return A.Not(fold_expr(a), loc=e.loc)
        case A.MapLit(t, entries):
            return A.MapLit(t, tuple((k, fold_expr(v)) for k, v in entries), loc=e.loc)
        case A.StructLit(s, fields):
            return A.StructLit(s, tuple((f, fold_expr(v)) for f, v in fields), loc=e.loc)
        case A.Index(b, k):
            return A.Index(fold_expr(b), fold_expr(k), loc=e.loc)
        case A.Update(b, k, v):
            return A.Update(fold_expr(b), fold_expr(k), fold_expr(v), loc=e.loc)
        case A.Field(b, name):
            return A.Field(fold_expr(b), name, loc=e.loc)
        case A.FieldUpdate(b, name, v):
            return A.FieldUpdate(fold_expr(b), name, fold_expr(v), loc=e.loc)
    return e


def _fold_stmt(s: A.Stmt) -> A.Stmt:
    match s:
        case A.Seq(a, b):
            return A.Seq(_fold_stmt(a), _fold_stmt(b), loc=s.loc)
        case A.Let(name, typ, value):
            return A.Let(name, typ, fold_expr(value), loc=s.loc)
        case A.Assume(c):
            return A.Assume(fold_expr(c), loc=s.loc)
        case A.Assert(c):
            return A.Assert(fold_expr(c), loc=s.loc)
        case A.Commit(writes):
            return A.Commit(tuple((fold_expr(e), sv) for e, sv in writes), loc=s.loc)
        case A.Call(t, typ, f, args):
            return A.Call(t, typ, f, tuple(fold_expr(a) for a in args), loc=s.loc)
        case A.If(c, a, b, join):
            return A.If(fold_expr(c), _fold_stmt(a), _fold_stmt(b), join, loc=s.loc)
        case A.While(join, c, body):
            return A.While(join, fold_expr(c), _fold_stmt(body), loc=s.loc)
    return s


def _fold_fun(f: A.FunDecl) -> A.FunDecl:
    return A.FunDecl(f.name, f.params, f.ret, _fold_stmt(f.body), fold_expr(f.result), f.pure, loc=f.loc)


def fold_constants(c: A.Contract) -> A.Contract:
    """Replace constant arithmetic in program code by its value.

    Only program expressions are folded; refinements are left as written.
    Raises ConstantOverflow if a constant expression leaves [0, MaxInt].
    """
    ctor = _fold_fun(c.ctor) if c.ctor else None
    return A.Contract(c.name, c.structs, c.state_vars, ctor, tuple(_fold_fun(f) for f in c.functions), loc=c.loc)
