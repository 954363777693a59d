"""Encoding of obligations into SMT-LIB 2 validity queries and Horn systems.

UInt is encoded as Real with explicit [0, MaxInt] bounds. Structs are
flattened into one symbol per leaf path (`s__a`), maps become arrays per
component, and aggregate operators become uninterpreted functions: Sum is a
function symbol per (access path, array depth); Fld selects a component and
Flatten only raises the array depth Sum is applied at.

Terms are plain nested tuples of strings, rendered by `render`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Union

from . import ast as A
from .errors import EncodingError, NonHornShape, UnknownPredicatePresent
from .sorts import sort_of
from .templates import bound_terms, fill, template_family

Term = Union[str, tuple]
Path = tuple[str, ...]

REAL = "Real"
BOOL = "Bool"
VALIDITY_LOGIC = "QF_AUFNRA"
TRUE_T = "true"
FALSE_T = "false"

# Sigma entry: (formal parameter names, body term over them)
SigmaEntry = tuple[tuple[str, ...], Term]


def render(t: Term) -> str:
    if isinstance(t, str):
        return t
    return "(" + " ".join(render(x) for x in t) + ")"


def real(n: int) -> Term:
    return f"{n}.0" if n >= 0 else ("-", f"{-n}.0")


def quote(name: str) -> str:
    return f"|{name}|"


def symbol(name: str, path: Path = ()) -> str:
    return quote("__".join((name,) + path))


def array_sort(inner: str, depth: int = 1) -> str:
    for _ in range(depth):
        inner = f"(Array Real {inner})"
    return inner


def zero_of(sort: str) -> Term:
    if sort == REAL:
        return "0.0"
    if sort == BOOL:
        return FALSE_T
    inner = sort[len("(Array Real "):-1]
    return (("as", "const", sort), zero_of(inner))


def components(t: A.BaseType, structs: A.StructTable) -> list[tuple[Path, str]]:
    """Leaf components of a base type with their SMT sorts; Unit has none."""
    match t:
        case A.UIntType():
            return [((), REAL)]
        case A.BoolType():
            return [((), BOOL)]
        case A.UnitType():
            return []
        case A.MapType(v):
            return [(p, array_sort(s)) for p, s in components(v, structs)]
        case A.StructType(name):
            return [((x,) + p, s) for x, ft in structs[name].fields for p, s in components(ft, structs)]
    raise EncodingError(f"no encoding for type {t}")


def conj_t(parts: list[Term]) -> Term:
    parts = [p for p in parts if p != TRUE_T]
    if not parts:
        return TRUE_T
    if FALSE_T in parts:
        return FALSE_T
    return parts[0] if len(parts) == 1 else ("and", *parts)


def subst_term(t: Term, mapping: Mapping[str, Term]) -> Term:
    if isinstance(t, str):
        return mapping.get(t, t)
    return tuple(subst_term(x, mapping) for x in t)


def term_symbols(t: Term) -> set[str]:
    if isinstance(t, str):
        return {t}
    out: set[str] = set()
    for x in t:
        out |= term_symbols(x)
    return out


# ------------------------------------------------------------ integrality

_LITERAL_HEADS = set("0123456789")


def _integral(t: Term) -> bool:
    """Is `t` integer-valued whenever its symbols denote naturals?"""
    if isinstance(t, str):
        if t[:1] in _LITERAL_HEADS:
            whole, _, frac = t.partition(".")
            return frac.strip("0") == ""
        return True
    head = t[0]
    if head in ("+", "-", "*"):
        return all(_integral(x) for x in t[1:])
    if head == "ite":
        return _integral(t[2]) and _integral(t[3])
    if head in ("/", "to_real"):
        return False
    # uninterpreted functions and array reads range over naturals
    return head not in _CONNECTIVES and head not in _COMPARISONS


_CONNECTIVES = {"and", "or", "not", "=>", "=", "distinct", "forall", "exists", "let"}
_COMPARISONS = {"<", "<=", ">", ">="}


def integralize(t: Term, positive: bool = True) -> Term:
    """Rewrite comparisons between integer-valued terms for the Real encoding.

    Over the naturals `a < b` and `a + 1 <= b` coincide, but over the reals
    the first is weaker. Positive occurrences take the weaker form and
    negative ones the stronger, so validity over the reals becomes easier to
    establish while the formula still agrees on every integer valuation.
    """
    if isinstance(t, str):
        return t
    head = t[0]
    match head:
        case "not":
            return ("not", integralize(t[1], not positive))
        case "and" | "or":
            return (head, *(integralize(x, positive) for x in t[1:]))
        case "=>":
            return ("=>", integralize(t[1], not positive), integralize(t[2], positive))
        case "<" | "<=" | ">" | ">=" if len(t) == 3 and _integral(t[1]) and _integral(t[2]):
            a, b = t[1], t[2]
            if positive:
                if head == "<=":
                    return ("<", a, ("+", b, "1.0"))
                if head == ">=":
                    return (">", ("+", a, "1.0"), b)
            else:
                if head == "<":
                    return ("<=", ("+", a, "1.0"), b)
                if head == ">":
                    return (">=", a, ("+", b, "1.0"))
            return t
    return t


@dataclass
class Enc:
    """Encoded value: one term per component path; `depth` counts pending Flattens."""

    sort: A.BaseType
    comps: dict[Path, Term]
    depth: int = 0
    path: Path = ()

    @property
    def leaf(self) -> Term:
        return self.comps[()]


@dataclass
class Encoder:
    """Stateful encoder for one query: records the symbols and functions it uses.

    `sigma` (validity mode) interprets unknown predicates; `chc` keeps them as
    predicate applications, which must then occur only positively in conjunctions.
    """

    structs: A.StructTable
    nested: bool = True
    sigma: Mapping[str, SigmaEntry] | None = None
    chc: bool = False
    chc_arrays: bool = False
    consts: dict[str, str] = field(default_factory=dict)
    funs: dict[str, tuple[tuple[str, ...], str]] = field(default_factory=dict)
    sorts: dict[str, A.BaseType] = field(default_factory=dict)

    # ------------------------------------------------------------ symbols

    def declare(self, name: str, base: A.BaseType) -> None:
        self.sorts[name] = base
        for p, s in components(base, self.structs):
            self.consts.setdefault(symbol(name, p), s)

    def var(self, name: str) -> Enc:
        if name not in self.sorts:
            raise EncodingError(f"undeclared variable {name}")
        base = self.sorts[name]
        return Enc(base, {p: symbol(name, p) for p, _ in components(base, self.structs)})

    def fun(self, name: str, args: tuple[str, ...], ret: str) -> str:
        self.funs.setdefault(name, (args, ret))
        return name

    # ------------------------------------------------------------ expressions

    def formula(self, e: A.Expr, positive: bool = True) -> Term:
        """Encode a Bool-sorted refinement; `positive` is true only under top-level conjunctions."""
        match e:
            case A.BinOp("&&", l, r):
                return conj_t([self.formula(l, positive), self.formula(r, positive)])
            case A.PredApp(name, args):
                return self.pred_app(name, args, positive)
        return self.term(e).leaf

    def term(self, e: A.Expr) -> Enc:
        match e:
            case A.Nat(n):
                return Enc(A.UINT, {(): real(n)})
            case A.BoolLit(b):
                return Enc(A.BOOL, {(): TRUE_T if b else FALSE_T})
            case A.UnitLit():
                return Enc(A.UNIT, {})
            case A.MaxInt():
                return Enc(A.UINT, {(): "MAXINT"})
            case A.Var(name):
                return self.var(name)
            case A.Not(a):
                return Enc(A.BOOL, {(): ("not", self.formula(a, False))})
            case A.BinOp(op, l, r):
                return self.binop(op, l, r)
            case A.Index(m, k):
                me = self.term(m)
                self.no_flatten(me, e)
                key = self.term(k).leaf
                return Enc(me.sort.value, {p: ("select", t, key) for p, t in me.comps.items()})
            case A.Update(m, k, v):
                me = self.term(m)
                self.no_flatten(me, e)
                key = self.term(k).leaf
                ve = self.term(v)
                return Enc(me.sort, {p: ("store", t, key, ve.comps[p]) for p, t in me.comps.items()})
            case A.Field(s, x):
                se = self.term(s)
                return Enc(self.field_type(se.sort, x), self.project(se.comps, x))
            case A.FieldUpdate(s, x, v):
                se = self.term(s)
                ve = self.term(v)
                comps = {p: t for p, t in se.comps.items() if p[:1] != (x,)}
                comps.update({(x,) + p: t for p, t in ve.comps.items()})
                return Enc(se.sort, comps)
            case A.StructLit(name, fields):
                comps: dict[Path, Term] = {}
                for x, fe in fields:
                    comps.update({(x,) + p: t for p, t in self.term(fe).comps.items()})
                return Enc(A.StructType(name), comps)
            case A.MapLit(vt, entries):
                comps = {p: zero_of(array_sort(s)) for p, s in components(vt, self.structs)}
                for k, ve in sorted(entries, key=lambda kv: kv[0]):
                    venc = self.term(ve)
                    comps = {p: ("store", t, real(k), venc.comps[p]) for p, t in comps.items()}
                return Enc(A.MapType(vt), comps)
            case A.Sum(a):
                ae = self.term(a)
                name = "sum__" + "__".join(ae.path + (str(ae.depth + 1),))
                f = self.fun(name, (array_sort(REAL, ae.depth + 1),), REAL)
                return Enc(A.UINT, {(): (f, ae.leaf)})
            case A.Flatten(a):
                ae = self.term(a)
                return Enc(ae.sort.value, ae.comps, ae.depth + 1, ae.path)
            case A.Fld(x, a):
                ae = self.term(a)
                ft = self.field_type(ae.sort.value, x)
                return Enc(A.MapType(ft), self.project(ae.comps, x), ae.depth, ae.path + (x,))
            case A.PredApp(name, args):
                return Enc(A.BOOL, {(): self.pred_app(name, args, False)})
        raise EncodingError(f"cannot encode {type(e).__name__}", getattr(e, "loc", None))

    def binop(self, op: str, l: A.Expr, r: A.Expr) -> Enc:
        if op in ("&&", "||"):
            parts = [self.formula(l, False), self.formula(r, False)]
            return Enc(A.BOOL, {(): ("and" if op == "&&" else "or", *parts)})
        le, re_ = self.term(l), self.term(r)
        if op in A.EQUALITY_OPS:
            same = conj_t([("=", le.comps[p], re_.comps[p]) for p in le.comps])
            return Enc(A.BOOL, {(): same if op == "==" else ("not", same)})
        a, b = le.leaf, re_.leaf
        match op:
            case "+" | "-" | "*":
                return Enc(A.UINT, {(): (op, a, b)})
            case "/":
                return Enc(A.UINT, {(): (self.fun("idiv", (REAL, REAL), REAL), a, b)})
            case "<" | "<=" | ">" | ">=":
                return Enc(A.BOOL, {(): (op, a, b)})
        raise EncodingError(f"unknown operator {op}")

    def field_type(self, t: A.BaseType, x: str) -> A.BaseType:
        if not isinstance(t, A.StructType):
            raise EncodingError(f"field {x} of non-struct {t}")
        return self.structs[t.name].field_type(x)

    @staticmethod
    def project(comps: dict[Path, Term], x: str) -> dict[Path, Term]:
        return {p[1:]: t for p, t in comps.items() if p[:1] == (x,)}

    @staticmethod
    def no_flatten(enc: Enc, e: A.Expr) -> None:
        if enc.depth:
            raise EncodingError("indexing a flattened map", getattr(e, "loc", None))

    # ------------------------------------------------------------ unknowns

    def slots(self, arg: A.Expr, sort: A.BaseType) -> list[Term]:
        """Argument terms a predicate receives for one formal of sort `sort`."""
        match sort:
            case A.UnitType():
                return []
            case A.UIntType() | A.BoolType():
                return [self.term(arg).leaf]
            case A.StructType(name):
                out = []
                for x, ft in self.structs[name].fields:
                    out += self.slots(A.Field(arg, x), ft)
                return out
            case A.MapType(v):
                out = []
                if self.chc_arrays:
                    out += list(self.term(arg).comps.values())
                for m in template_family(v, self.structs, self.nested):
                    out.append(self.term(fill(m.outer.term, arg)).leaf)
                return out
        raise EncodingError(f"no slots for {sort}")

    def pred_app(self, name: str, args: tuple[A.Expr, ...], positive: bool) -> Term:
        terms: list[Term] = []
        for a in args:
            terms += self.slots(a, self.arg_sort(a))
        if self.chc:
            if not positive:
                raise NonHornShape(f"unknown predicate {name} occurs in a non-Horn position")
            return (name, *terms) if terms else name
        if self.sigma is None:
            raise UnknownPredicatePresent(f"unknown predicate {name} in a validity query")
        if name not in self.sigma:
            return TRUE_T
        formals, body = self.sigma[name]
        if len(formals) != len(terms):
            raise EncodingError(f"interpretation of {name} has {len(formals)} formals, expected {len(terms)}")
        return subst_term(body, dict(zip(formals, terms)))

    def arg_sort(self, a: A.Expr) -> A.BaseType:
        return sort_of(a, dict(self.sorts), self.structs)


def slot_sorts(t: A.BaseType, structs: A.StructTable, nested: bool = True, chc_arrays: bool = False) -> list[str]:
    """SMT sorts of the predicate slots for one formal of base type `t`."""
    match t:
        case A.UnitType():
            return []
        case A.UIntType():
            return [REAL]
        case A.BoolType():
            return [BOOL]
        case A.StructType(name):
            return [s for _, ft in structs[name].fields for s in slot_sorts(ft, structs, nested, chc_arrays)]
        case A.MapType(v):
            arrays = [s for _, s in components(t, structs)] if chc_arrays else []
            return arrays + [REAL] * len(template_family(v, structs, nested))
    raise EncodingError(f"no slots for {t}")


def pred_signature(sorts: tuple[A.BaseType, ...], structs: A.StructTable, nested: bool = True,
                   chc_arrays: bool = False) -> tuple[str, ...]:
    return tuple(s for t in sorts for s in slot_sorts(t, structs, nested, chc_arrays))


# ------------------------------------------------------------ formulas


def encode_type_bounds(enc: Encoder, t: A.Expr, base: A.BaseType) -> Term:
    """Range facts for a term of sort `base` ([0, MaxInt] for UInt, nonnegative aggregates otherwise)."""
    return conj_t([enc.formula(q) for q in bound_terms(t, base, enc.structs, enc.nested)])


def encode_env_guards(enc: Encoder, env, guards, prior) -> Term:
    """Conjunction of binding refinements and bounds, guards and prior safety predicates.

    Declares every bound variable in `enc` as a side effect. Lock status has no
    logical content and is not encoded.
    """
    parts: list[Term] = []
    for b in env:
        enc.declare(b.name, b.base)
    for b in env:
        parts.append(encode_type_bounds(enc, A.Var(b.name), b.base))
        if b.qual != A.BoolLit(True):
            parts.append(enc.formula(A.substitute(b.qual, {}, nu=A.Var(b.name))))
    parts += [enc.formula(g) for g in guards]
    parts += [enc.formula(p) for p in prior]
    return conj_t(parts)


def _nu_value(ob) -> A.Expr | None:
    """The expression ν is pinned to when the obligation's lhs starts with `ν == e`."""
    cs = A.conjuncts(ob.lhs)
    if cs and isinstance(cs[0], A.BinOp) and cs[0].op == "==" and isinstance(cs[0].left, A.Nu):
        e = cs[0].right
        if not any(isinstance(n, A.Nu) for n in A.walk(e)):
            return e
    return None


NU_NAME = "v"


def obligation_parts(enc: Encoder, ob, prior: bool = True) -> tuple[list[Term], A.Expr]:
    """Hypotheses (encoded) and the consequent (as a refinement, ν resolved)."""
    hyps = [encode_env_guards(enc, ob.env, ob.guards, (), )]
    hyps += [enc.formula(f) for f in ob.facts]
    if prior:
        hyps += [enc.formula(p) for p in ob.prior]
    pinned = _nu_value(ob)
    if pinned is not None:
        nu = pinned
    else:
        nu = A.Var(NU_NAME)
        mentions = any(isinstance(n, A.Nu) for p in (ob.lhs, ob.consequent) for n in A.walk(p))
        if ob.base != A.UNIT and mentions:
            enc.declare(NU_NAME, ob.base)
            hyps.append(encode_type_bounds(enc, nu, ob.base))
    lhs = A.substitute(ob.lhs, {}, nu=nu)
    hyps.append(enc.formula(lhs))
    return [h for h in hyps if h != TRUE_T], A.substitute(ob.consequent, {}, nu=nu)


def encode_subtyping(enc: Encoder, ob, prior: bool = True) -> Term:
    """Encode(context) ∧ Encode(lhs) ⟹ Encode(consequent)."""
    hyps, goal = obligation_parts(enc, ob, prior)
    return ("=>", conj_t(hyps), enc.formula(goal))


def maxint_definition() -> str:
    return f"(define-fun MAXINT () Real {A.MAX_INT}.0)"


def _fun_decls(funs: Mapping[str, tuple[tuple[str, ...], str]]) -> list[str]:
    return [f"(declare-fun {n} ({' '.join(args)}) {ret})" for n, (args, ret) in sorted(funs.items())]


def to_validity_script(f: Term, enc: Encoder) -> str:
    """Script whose answer is unsat exactly when `f` is valid."""
    lines = [f"(set-logic {VALIDITY_LOGIC})", maxint_definition()]
    lines += _fun_decls(enc.funs)
    lines += [f"(declare-fun {s} () {sort})" for s, sort in enc.consts.items()]
    lines += [f"(assert (not {render(integralize(f))}))", "(check-sat)"]
    return "\n".join(lines) + "\n"


def validity_script(ob, structs: A.StructTable, nested: bool = True,
                    sigma: Mapping[str, SigmaEntry] | None = None, prior: bool = True) -> str:
    enc = Encoder(structs, nested, sigma=sigma)
    return to_validity_script(encode_subtyping(enc, ob, prior), enc)


# ------------------------------------------------------------ Horn clauses


def term_sort(t: Term, sorts: Mapping[str, str], funs: Mapping[str, tuple]) -> str:
    """SMT sort of an encoded term."""
    if isinstance(t, str):
        if t in sorts:
            return sorts[t]
        return BOOL if t in (TRUE_T, FALSE_T) else REAL
    head = t[0]
    if isinstance(head, tuple):
        return head[2]  # ((as const S) v)
    match head:
        case "select":
            return term_sort(t[1], sorts, funs)[len("(Array Real "):-1]
        case "store" | "ite":
            return term_sort(t[-1] if head == "ite" else t[1], sorts, funs)
        case "+" | "-" | "*" | "/":
            return REAL
    if head in funs:
        return funs[head][1]
    return BOOL


def is_array_sort(sort: str) -> bool:
    return sort.startswith("(Array")


def ackermannize(terms: list[Term], funs: Mapping[str, tuple], sorts: Mapping[str, str] | None = None,
                 reads: bool = False) -> tuple[list[Term], list[tuple[str, str]], list[Term]]:
    """Replace applications of uninterpreted functions by fresh ghost variables.

    With `reads`, array reads are treated the same way. Returns the rewritten
    terms, the ghost declarations and the functional consistency constraints
    between ghosts of the same function.
    """
    sorts = dict(sorts or {})
    ghosts: dict[Term, str] = {}
    by_fun: dict[str, list[tuple[tuple, str]]] = {}

    def go(t: Term) -> Term:
        if isinstance(t, str):
            return t
        t = tuple(go(x) for x in t)
        head = t[0]
        if isinstance(head, str) and (head in funs or (reads and head == "select")):
            if t not in ghosts:
                g = quote(f"g!{len(ghosts)}")
                sorts[g] = term_sort(t, sorts, funs)
                ghosts[t] = g
                by_fun.setdefault(head, []).append((t[1:], g))
            return ghosts[t]
        return t

    out = [go(t) for t in terms]
    decls = [(g, sorts[g]) for g in ghosts.values()]
    congruence: list[Term] = []
    for name in sorted(by_fun):
        for (a1, g1), (a2, g2) in combinations(by_fun[name], 2):
            same = conj_t([("=", x, y) for x, y in zip(a1, a2) if x != y])
            congruence.append(("=>", same, ("=", g1, g2)) if same != TRUE_T else ("=", g1, g2))
    return out, decls, congruence


def _atoms(t: Term) -> list[Term]:
    if isinstance(t, tuple) and t and t[0] == "and":
        return [a for x in t[1:] for a in _atoms(x)]
    return [] if t == TRUE_T else [t]


def _mentions_array(t: Term, sorts: Mapping[str, str]) -> bool:
    if isinstance(t, str):
        return is_array_sort(sorts.get(t, REAL))
    if isinstance(t[0], tuple) or t[0] in ("store", "select"):
        return True
    return any(_mentions_array(x, sorts) for x in t[1:])


def _array_definitions(atoms: list[Term], sorts: Mapping[str, str]) -> dict[str, Term]:
    defs: dict[str, Term] = {}
    for a in atoms:
        if not (isinstance(a, tuple) and len(a) == 3 and a[0] == "="):
            continue
        for x, t in ((a[1], a[2]), (a[2], a[1])):
            if isinstance(x, str) and is_array_sort(sorts.get(x, REAL)) and x not in defs:
                t = subst_term(t, defs)
                if x not in term_symbols(t):
                    defs = {k: subst_term(v, {x: t}) for k, v in defs.items()}
                    defs[x] = t
                    break
    return defs


def inline_array_definitions(atoms: list[Term], defs: Mapping[str, Term]) -> list[Term]:
    """Substitute array variables defined by an equation `(= x t)` among the hypotheses.

    The defining equations become trivial and are dropped, so equal array
    terms share one ghost after Ackermannization.
    """
    out = []
    for a in atoms:
        b = subst_term(a, defs)
        if isinstance(b, tuple) and len(b) == 3 and b[0] == "=" and b[1] == b[2]:
            continue
        out.append(b)
    return out


@dataclass(frozen=True)
class HornClause:
    """forall variables. body ⟹ head, with at most one predicate application in the head."""

    variables: tuple[tuple[str, str], ...]
    body: tuple[Term, ...]
    head: Term
    origin: str = ""


def horn_clauses(ob, structs: A.StructTable, nested: bool = True, prior: bool = True,
                 chc_arrays: bool = False, origin: str = "") -> list[HornClause]:
    """Clauses for one obligation: one per conjunct of the consequent.

    Aggregates and array reads become ghost variables; body atoms that still
    mention arrays are then dropped. Dropping hypotheses only strengthens a
    clause, so every solution of the result solves the original system.
    With `chc_arrays` arrays are kept and passed to the predicates instead.
    """
    enc = Encoder(structs, nested, chc=True, chc_arrays=chc_arrays)
    hyps, goal = obligation_parts(enc, ob, prior)
    heads = [enc.formula(c) for c in A.conjuncts(goal)]
    out = []
    if not chc_arrays:
        atoms = [a for h in hyps for a in _atoms(h)]
        defs = _array_definitions(atoms, enc.consts)
        hyps = inline_array_definitions(atoms, defs)
        heads = [subst_term(h, defs) for h in heads]
    for head in heads:
        if head == TRUE_T:
            continue
        terms, ghosts, congruence = ackermannize(hyps + [head], enc.funs, enc.consts, reads=not chc_arrays)
        sorts = dict(enc.consts) | dict(ghosts)
        body = [a for t in terms[:-1] + congruence for a in _atoms(t)]
        if not chc_arrays:
            body = [a for a in body if not _mentions_array(a, sorts)]
        body = list(dict.fromkeys(body))
        head2 = terms[-1]
        used = set()
        for t in body + [head2]:
            used |= term_symbols(t)
        variables = tuple((s, sort) for s, sort in sorts.items() if s in used)
        out.append(HornClause(variables, tuple(body), head2, origin))
    return out


def to_horn_script(clauses: list[HornClause], preds: Mapping[str, tuple[str, ...]]) -> str:
    """HORN-logic script; `preds` maps each unknown predicate to its argument sorts."""
    lines = ["(set-logic HORN)", maxint_definition()]
    lines += [f"(declare-fun {n} ({' '.join(sorts)}) Bool)" for n, sorts in preds.items()]
    for c in clauses:
        if c.origin:
            lines.append(f"; {c.origin}")
        imp = render(integralize(("=>", conj_t(list(c.body)), c.head)))
        if c.variables:
            binders = " ".join(f"({s} {sort})" for s, sort in c.variables)
            lines.append(f"(assert (forall ({binders}) {imp}))")
        else:
            lines.append(f"(assert {imp})")
    lines += ["(check-sat)", "(get-model)"]
    return "\n".join(lines) + "\n"
