"""MiniSol abstract syntax.

Every node is a frozen dataclass. Source locations ride along on each node but
are excluded from equality and hashing, so two trees parsed from differently
formatted text compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

MAX_INT = 2**256 - 1


@dataclass(frozen=True)
class SourceLoc:
    file: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


def _loc():
    return field(default=None, compare=False, repr=False, kw_only=True)


# ---------------------------------------------------------------- base types


@dataclass(frozen=True)
class UIntType:
    def __str__(self) -> str:
        return "uint"


@dataclass(frozen=True)
class BoolType:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class UnitType:
    def __str__(self) -> str:
        return "unit"


@dataclass(frozen=True)
class MapType:
    value: BaseType

    def __str__(self) -> str:
        return f"map(uint => {self.value})"


@dataclass(frozen=True)
class StructType:
    name: str

    def __str__(self) -> str:
        return self.name


BaseType = Union[UIntType, BoolType, UnitType, MapType, StructType]

UINT = UIntType()
BOOL = BoolType()
UNIT = UnitType()


# --------------------------------------------------------------- expressions


class Expr:
    """Marker base class for expressions and refinement terms."""

    loc: SourceLoc | None


@dataclass(frozen=True)
class Nat(Expr):
    value: int
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class UnitLit(Expr):
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Var(Expr):
    name: str
    loc: SourceLoc | None = _loc()


ARITH_OPS = ("+", "-", "*", "/")
COMPARE_OPS = ("<", "<=", ">", ">=")
EQUALITY_OPS = ("==", "!=")
LOGIC_OPS = ("&&", "||")


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Not(Expr):
    operand: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class MapLit(Expr):
    """Finite map constant; absent keys read as the zero value."""

    value_type: BaseType
    entries: tuple[tuple[int, Expr], ...]
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class StructLit(Expr):
    name: str
    fields: tuple[tuple[str, Expr], ...]
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Index(Expr):
    base: Expr
    key: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Field(Expr):
    base: Expr
    name: str
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Update(Expr):
    base: Expr
    key: Expr
    value: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class FieldUpdate(Expr):
    base: Expr
    name: str
    value: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Havoc(Expr):
    type: BaseType
    loc: SourceLoc | None = _loc()


# refinement-only terms


@dataclass(frozen=True)
class Nu(Expr):
    """The value variable of a refinement (written `v`)."""

    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Sum(Expr):
    arg: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Fld(Expr):
    name: str
    arg: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Flatten(Expr):
    arg: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class MaxInt(Expr):
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Hole(Expr):
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class PredApp(Expr):
    """Application of an unknown refinement predicate (inference only)."""

    name: str
    args: tuple[Expr, ...]
    loc: SourceLoc | None = _loc()


# ------------------------------------------------------------------- types


@dataclass(frozen=True)
class RefType:
    """`{base | qual}`; ``qual is None`` means the user wrote no refinement."""

    base: BaseType
    qual: Expr | None = None

    @property
    def annotated(self) -> bool:
        return self.qual is not None


# -------------------------------------------------------------- statements


class Stmt:
    loc: SourceLoc | None


@dataclass(frozen=True)
class Let(Stmt):
    name: str
    type: RefType
    value: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Seq(Stmt):
    first: Stmt
    second: Stmt
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Skip(Stmt):
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Assert(Stmt):
    cond: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Assume(Stmt):
    cond: Expr
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Phi:
    name: str
    type: RefType
    left: str
    right: str
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then: Stmt
    orelse: Stmt
    join: tuple[Phi, ...]
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class While(Stmt):
    """Loop whose phis take `left` on entry and `right` at the end of the body."""

    join: tuple[Phi, ...]
    cond: Expr
    body: Stmt
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Fetch(Stmt):
    bindings: tuple[tuple[str, str], ...]  # (state var, local)
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Commit(Stmt):
    writes: tuple[tuple[Expr, str], ...]  # (value, state var)
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Call(Stmt):
    target: str
    type: RefType
    func: str
    args: tuple[Expr, ...]
    loc: SourceLoc | None = _loc()


def seq(*stmts: Stmt) -> Stmt:
    """Right-nested sequence; the shape the parser produces."""
    if not stmts:
        return Skip()
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


def flatten_seq(s: Stmt) -> list[Stmt]:
    if isinstance(s, Seq):
        return flatten_seq(s.first) + flatten_seq(s.second)
    return [s]


# ---------------------------------------------------------------- contract


@dataclass(frozen=True)
class StructDecl:
    name: str
    fields: tuple[tuple[str, BaseType], ...]
    loc: SourceLoc | None = _loc()

    def field_type(self, name: str) -> BaseType | None:
        for f, t in self.fields:
            if f == name:
                return t
        return None


@dataclass(frozen=True)
class StateVar:
    name: str
    type: RefType
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class Param:
    name: str
    type: RefType
    loc: SourceLoc | None = _loc()


@dataclass(frozen=True)
class FunDecl:
    name: str
    params: tuple[Param, ...]
    ret: RefType
    body: Stmt
    result: Expr
    pure: bool = False
    loc: SourceLoc | None = _loc()


CTOR = "constructor"
SENDER = "msg_sender"


@dataclass(frozen=True)
class Contract:
    name: str
    structs: tuple[StructDecl, ...] = ()
    state_vars: tuple[StateVar, ...] = ()
    ctor: FunDecl | None = None
    functions: tuple[FunDecl, ...] = ()
    loc: SourceLoc | None = _loc()

    def struct_table(self) -> dict[str, StructDecl]:
        return {s.name: s for s in self.structs}

    def function(self, name: str) -> FunDecl | None:
        if name == CTOR:
            return self.ctor
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def all_functions(self) -> list[FunDecl]:
        return ([self.ctor] if self.ctor else []) + list(self.functions)


StructTable = dict[str, StructDecl]


# ------------------------------------------------------------ tree helpers


def children(e: Expr) -> tuple[Expr, ...]:
    match e:
        case BinOp(_, l, r):
            return (l, r)
        case Not(a) | Sum(a) | Fld(_, a) | Flatten(a) | Field(a, _):
            return (a,)
        case MapLit(_, entries):
            return tuple(v for _, v in entries)
        case StructLit(_, fields):
            return tuple(v for _, v in fields)
        case Index(b, k):
            return (b, k)
        case Update(b, k, v):
            return (b, k, v)
        case FieldUpdate(b, _, v):
            return (b, v)
        case PredApp(_, args):
            return args
    return ()


def walk(e: Expr):
    yield e
    for c in children(e):
        yield from walk(c)


def free_vars(e: Expr) -> set[str]:
    return {n.name for n in walk(e) if isinstance(n, Var)}


def substitute(e: Expr, mapping: dict[str, Expr], nu: Expr | None = None) -> Expr:
    """Simultaneous substitution of variables (and optionally the value variable)."""

    def go(e: Expr) -> Expr:
        match e:
            case Var(name) if name in mapping:
                return mapping[name]
            case Nu() if nu is not None:
                return nu
            case BinOp(op, l, r):
                return BinOp(op, go(l), go(r), loc=e.loc)
            case Not(a):
                return Not(go(a), loc=e.loc)
            case Sum(a):
                return Sum(go(a), loc=e.loc)
            case Fld(name, a):
                return Fld(name, go(a), loc=e.loc)
            case Flatten(a):
                return Flatten(go(a), loc=e.loc)
            case Field(b, name):
                return Field(go(b), name, loc=e.loc)
            case MapLit(t, entries):
                return MapLit(t, tuple((k, go(v)) for k, v in entries), loc=e.loc)
            case StructLit(s, fields):
                return StructLit(s, tuple((f, go(v)) for f, v in fields), loc=e.loc)
            case Index(b, k):
                return Index(go(b), go(k), loc=e.loc)
            case Update(b, k, v):
                return Update(go(b), go(k), go(v), loc=e.loc)
            case FieldUpdate(b, name, v):
                return FieldUpdate(go(b), name, go(v), loc=e.loc)
            case PredApp(name, args):
                return PredApp(name, tuple(go(a) for a in args), loc=e.loc)
        return e

    return go(e)


def conj(parts) -> Expr:
    parts = [p for p in parts if p is not None and p != BoolLit(True)]
    if not parts:
        return BoolLit(True)
    out = parts[0]
    for p in parts[1:]:
        out = BinOp("&&", out, p)
    return out


def conjuncts(e: Expr | None) -> list[Expr]:
    if e is None:
        return []
    if isinstance(e, BinOp) and e.op == "&&":
        return conjuncts(e.left) + conjuncts(e.right)
    if e == BoolLit(True):
        return []
    return [e]
