"""Sort inference for program expressions and refinement terms."""

from __future__ import annotations

from . import ast as A
from .errors import SortError, UnboundVariable


def struct_field(structs: A.StructTable, sname: str, field: str, loc=None) -> A.BaseType:
    decl = structs.get(sname)
    if decl is None:
        raise SortError(f"unknown struct {sname}", loc)
    t = decl.field_type(field)
    if t is None:
        raise SortError(f"struct {sname} has no field {field}", loc)
    return t


def sort_of(
    e: A.Expr,
    env: dict[str, A.BaseType],
    structs: A.StructTable,
    nu: A.BaseType | None = None,
) -> A.BaseType:
    """Return the base sort of `e`, raising SortError / UnboundVariable on failure."""

    def go(e: A.Expr) -> A.BaseType:
        match e:
            case A.Nat():
                return A.UINT
            case A.BoolLit():
                return A.BOOL
            case A.UnitLit():
                return A.UNIT
            case A.MaxInt():
                return A.UINT
            case A.Var(name):
                if name not in env:
                    raise UnboundVariable(f"unbound variable {name}", e.loc)
                return env[name]
            case A.Nu():
                if nu is None:
                    raise SortError("value variable v used outside a refinement", e.loc)
                return nu
            case A.BinOp(op, l, r):
                lt, rt = go(l), go(r)
                if op in A.ARITH_OPS:
                    _want(lt, A.UINT, l)
                    _want(rt, A.UINT, r)
                    return A.UINT
                if op in A.COMPARE_OPS:
                    _want(lt, A.UINT, l)
                    _want(rt, A.UINT, r)
                    return A.BOOL
                if op in A.EQUALITY_OPS:
                    if lt != rt:
                        raise SortError(f"cannot compare {lt} with {rt}", e.loc)
                    return A.BOOL
                if op in A.LOGIC_OPS:
                    _want(lt, A.BOOL, l)
                    _want(rt, A.BOOL, r)
                    return A.BOOL
                raise SortError(f"unknown operator {op}", e.loc)
            case A.Not(a):
                _want(go(a), A.BOOL, a)
                return A.BOOL
            case A.MapLit(t, entries):
                _check_base(t, structs, e.loc)
                keys = [k for k, _ in entries]
                if len(set(keys)) != len(keys):
                    raise SortError("duplicate key in map constant", e.loc)
                for _, v in entries:
                    _want(go(v), t, v)
                return A.MapType(t)
            case A.StructLit(sname, fields):
                decl = structs.get(sname)
                if decl is None:
                    raise SortError(f"unknown struct {sname}", e.loc)
                if [f for f, _ in fields] != [f for f, _ in decl.fields]:
                    raise SortError(f"struct {sname} constant must list fields in declaration order", e.loc)
                for (f, v), (_, ft) in zip(fields, decl.fields):
                    _want(go(v), ft, v)
                return A.StructType(sname)
            case A.Index(b, k):
                bt = go(b)
                if not isinstance(bt, A.MapType):
                    raise SortError(f"indexing a non-map of sort {bt}", e.loc)
                _want(go(k), A.UINT, k)
                return bt.value
            case A.Update(b, k, v):
                bt = go(b)
                if not isinstance(bt, A.MapType):
                    raise SortError(f"updating a non-map of sort {bt}", e.loc)
                _want(go(k), A.UINT, k)
                _want(go(v), bt.value, v)
                return bt
            case A.Field(b, name):
                bt = go(b)
                if not isinstance(bt, A.StructType):
                    raise SortError(f"field access .{name} on non-struct sort {bt}", e.loc)
                return struct_field(structs, bt.name, name, e.loc)
            case A.FieldUpdate(b, name, v):
                bt = go(b)
                if not isinstance(bt, A.StructType):
                    raise SortError(f"field update .{name} on non-struct sort {bt}", e.loc)
                _want(go(v), struct_field(structs, bt.name, name, e.loc), v)
                return bt
            case A.Havoc(t):
                _check_base(t, structs, e.loc)
                return t
            case A.Sum(a):
                at = go(a)
                if at != A.MapType(A.UINT):
                    raise SortError(f"sum applies to map(uint => uint), not {at}", e.loc)
                return A.UINT
            case A.Flatten(a):
                at = go(a)
                if not (isinstance(at, A.MapType) and isinstance(at.value, A.MapType)):
                    raise SortError(f"flatten applies to nested maps, not {at}", e.loc)
                return at.value
            case A.Fld(name, a):
                at = go(a)
                if not (isinstance(at, A.MapType) and isinstance(at.value, A.StructType)):
                    raise SortError(f"fld.{name} applies to maps of structs, not {at}", e.loc)
                return A.MapType(struct_field(structs, at.value.name, name, e.loc))
            case A.Hole():
                raise SortError("template hole in a term", e.loc)
            case A.PredApp():
                return A.BOOL
        raise SortError(f"cannot sort {e!r}")

    return go(e)


def _want(got: A.BaseType, want: A.BaseType, e: A.Expr) -> None:
    if got != want:
        raise SortError(f"expected sort {want} but found {got}", e.loc)


def _check_base(t: A.BaseType, structs: A.StructTable, loc) -> None:
    match t:
        case A.MapType(v):
            _check_base(v, structs, loc)
        case A.StructType(name) if name not in structs:
            raise SortError(f"unknown struct {name}", loc)


def check_base(t: A.BaseType, structs: A.StructTable, loc=None) -> None:
    _check_base(t, structs, loc)
