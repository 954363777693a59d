"""Type-directed synthesis of aggregate templates and template families.

A template is a refinement term with a single hole. Starting from the hole's
sort, exactly one kind of operator applies at each sort:

    Map(UInt)        -> Sum
    Map(Map(T))      -> Flatten
    Map(Struct S)    -> Fld_x   for each field x of S   (appends x to the path)
    Struct S         -> .x      for each field x of S   (appends x to the path)

so synthesis is a finite forward walk over sorts and every reachable UInt leaf
has exactly one template and one access path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from . import ast as A
from .errors import SortMismatch

AccessPath = tuple[str, ...]


@dataclass(frozen=True)
class Template:
    term: A.Expr
    hole_sort: A.BaseType

    @property
    def size(self) -> int:
        return sum(1 for _ in A.walk(self.term))

    def __str__(self) -> str:
        return format_template(self.term)


@dataclass(frozen=True)
class FamilyMember:
    """(H1 over Map(T), H2 over T, w): the pair used by the map index/update rules."""

    outer: Template
    inner: Template
    path: AccessPath


def format_template(t: A.Expr) -> str:
    match t:
        case A.Hole():
            return "□"
        case A.Sum(a):
            return f"Sum({format_template(a)})"
        case A.Flatten(a):
            return f"Flatten({format_template(a)})"
        case A.Fld(x, a):
            return f"Fld_{x}({format_template(a)})"
        case A.Field(a, x):
            return f"{format_template(a)}[.{x}]"
    raise TypeError(t)


def format_path(w: AccessPath) -> str:
    return ".".join(w) if w else "ε"


def _steps(term: A.Expr, sort: A.BaseType, structs: A.StructTable):
    """One application of whichever rule matches `sort`."""
    match sort:
        case A.MapType(A.UIntType()):
            yield A.Sum(term), A.UINT, None
        case A.MapType(A.MapType(inner)):
            yield A.Flatten(term), A.MapType(inner), None
        case A.MapType(A.StructType(name)):
            for x, ft in structs[name].fields:
                yield A.Fld(x, term), A.MapType(ft), x
        case A.StructType(name):
            for x, ft in structs[name].fields:
                yield A.Field(term, x), ft, x


def synthesize(hole_sort: A.BaseType, target: A.BaseType, structs: A.StructTable) -> set[tuple[Template, AccessPath]]:
    """All (template, access path) pairs derivable with the hole at `hole_sort` and result `target`."""
    out: set[tuple[Template, AccessPath]] = set()
    frontier = [(A.Hole(), hole_sort, ())]
    while frontier:
        term, sort, path = frontier.pop()
        if sort == target:
            out.add((Template(term, hole_sort), path))
        for nterm, nsort, field in _steps(term, sort, structs):
            frontier.append((nterm, nsort, path + (field,) if field else path))
    return out


def _family(value_sort: A.BaseType, structs_key: tuple, nested: bool) -> tuple[FamilyMember, ...]:
    structs = {s.name: s for s in structs_key}
    if not nested and value_sort != A.UINT:
        return ()
    outer = {w: h for h, w in synthesize(A.MapType(value_sort), A.UINT, structs)}
    inner = {w: h for h, w in synthesize(value_sort, A.UINT, structs)}
    members = [FamilyMember(outer[w], inner[w], w) for w in outer if w in inner]
    members.sort(key=lambda m: (m.path, m.outer.size + m.inner.size))
    return tuple(members)


_family_cached = lru_cache(maxsize=None)(_family)


def template_family(value_sort: A.BaseType, structs: A.StructTable, nested: bool = True) -> list[FamilyMember]:
    """Ordered family for maps with value sort `value_sort` (canonical: by path, then size).

    With ``nested=False`` only the plain Map(UInt) case produces a member.
    """
    key = tuple(structs[k] for k in sorted(structs))
    return list(_family_cached(value_sort, key, nested))


def apply(template: Template, filler: A.Expr, filler_sort: A.BaseType | None = None) -> A.Expr:
    """Fill the hole. If `filler_sort` is given it must equal the template's hole sort."""
    if filler_sort is not None and filler_sort != template.hole_sort:
        raise SortMismatch(
            f"template {template} expects a hole of sort {template.hole_sort}, got {filler_sort}",
            getattr(filler, "loc", None),
        )
    return fill(template.term, filler)


def fill(term: A.Expr, filler: A.Expr) -> A.Expr:
    match term:
        case A.Hole():
            return filler
        case A.Sum(a):
            return A.Sum(fill(a, filler))
        case A.Flatten(a):
            return A.Flatten(fill(a, filler))
        case A.Fld(x, a):
            return A.Fld(x, fill(a, filler))
        case A.Field(a, x):
            return A.Field(fill(a, filler), x)
    raise TypeError(term)


def is_field_path(t: Template) -> bool:
    """True for templates built only from field accesses (□[.x][.y]...)."""
    node = t.term
    while isinstance(node, A.Field):
        node = node.base
    return isinstance(node, A.Hole)


def uint_leaves(sort: A.BaseType, structs: A.StructTable) -> list[tuple[Template, AccessPath]]:
    """UInt-valued templates over a value of `sort`, in canonical order."""
    found = synthesize(sort, A.UINT, structs)
    return sorted(found, key=lambda tw: (tw[1], tw[0].size))


def bound_terms(t: A.Expr, sort: A.BaseType, structs: A.StructTable, nested: bool = True) -> list[A.Expr]:
    """Range facts every value of `sort` satisfies, as refinement formulas over `t`.

    UInt gets [0, MaxInt]; maps get nonnegative aggregates for each family member;
    structs get nonnegative UInt leaves, with MaxInt as upper bound for plain fields.
    """
    zero = A.Nat(0)
    match sort:
        case A.UIntType():
            return [A.BinOp("<=", zero, t), A.BinOp("<=", t, A.MaxInt())]
        case A.MapType(v):
            return [A.BinOp("<=", zero, fill(m.outer.term, t)) for m in template_family(v, structs, nested)]
        case A.StructType():
            out = []
            for h, _ in uint_leaves(sort, structs):
                plain = is_field_path(h)
                if not plain and not nested:
                    continue
                term = fill(h.term, t)
                out.append(A.BinOp("<=", zero, term))
                if plain:
                    out.append(A.BinOp("<=", term, A.MaxInt()))
            return out
    return []
