"""Runtime values, zero values and concrete aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from . import ast as A
from .errors import DomainError


@dataclass(frozen=True)
class UnitV:
    def __str__(self) -> str:
        return "()"


UNIT_V = UnitV()


@dataclass(frozen=True)
class MapV:
    """Finite map; `entries` is sorted by key and absent keys read as the zero value."""

    value_type: A.BaseType
    entries: tuple[tuple[int, "Value"], ...] = ()

    def get(self, key: int, structs: A.StructTable) -> "Value":
        for k, v in self.entries:
            if k == key:
                return v
        return zero_val(self.value_type, structs)

    def set(self, key: int, value: "Value") -> "MapV":
        items = dict(self.entries)
        items[key] = value
        return MapV(self.value_type, tuple(sorted(items.items())))

    def normalized(self, structs: A.StructTable) -> "MapV":
        zero = zero_val(self.value_type, structs)
        keep = []
        for k, v in self.entries:
            v = normalize(v, structs)
            if v != zero:
                keep.append((k, v))
        return MapV(self.value_type, tuple(keep))


@dataclass(frozen=True)
class StructV:
    name: str
    fields: tuple[tuple[str, "Value"], ...]

    def get(self, field: str) -> "Value":
        for f, v in self.fields:
            if f == field:
                return v
        raise DomainError(f"struct {self.name} has no field {field}")

    def set(self, field: str, value: "Value") -> "StructV":
        return StructV(self.name, tuple((f, value if f == field else v) for f, v in self.fields))


Value = Union[int, bool, UnitV, MapV, StructV]


def zero_val(t: A.BaseType, structs: A.StructTable) -> Value:
    match t:
        case A.UIntType():
            return 0
        case A.BoolType():
            return False
        case A.UnitType():
            return UNIT_V
        case A.MapType(v):
            return MapV(v, ())
        case A.StructType(name):
            return StructV(name, tuple((f, zero_val(ft, structs)) for f, ft in structs[name].fields))
    raise TypeError(t)


def normalize(v: Value, structs: A.StructTable) -> Value:
    """Canonical form used for equality: zero-valued map entries are dropped."""
    match v:
        case MapV():
            return v.normalized(structs)
        case StructV(name, fields):
            return StructV(name, tuple((f, normalize(x, structs)) for f, x in fields))
    return v


def values_equal(a: Value, b: Value, structs: A.StructTable) -> bool:
    return normalize(a, structs) == normalize(b, structs)


def const_sum(w: tuple[str, ...], v: Value) -> int:
    """Concrete aggregate along access path `w`.

    n for a number (empty path), the sum over all values for a map (same path),
    and recursion into field x for a struct when w = x.w'.
    """
    match v:
        case bool():
            raise DomainError("cannot aggregate a boolean")
        case int():
            if w:
                raise DomainError(f"access path {'.'.join(w)} continues past a number")
            return v
        case MapV(_, entries):
            return sum(const_sum(w, x) for _, x in entries)
        case StructV(name, _):
            if not w:
                raise DomainError(f"access path ends at struct {name}")
            return const_sum(w[1:], v.get(w[0]))
    raise DomainError(f"cannot aggregate {v!r}")


def const_value(e: A.Expr, structs: A.StructTable) -> Value | None:
    """Value of a closed literal expression, or None if it mentions anything else."""
    match e:
        case A.BoolLit(b):
            return b
        case A.Nat(n):
            return n
        case A.UnitLit():
            return UNIT_V
        case A.MapLit(t, entries):
            vals = []
            for k, x in entries:
                cv = const_value(x, structs)
                if cv is None:
                    return None
                vals.append((k, cv))
            return MapV(t, tuple(sorted(vals, key=lambda kv: kv[0])))
        case A.StructLit(name, fields):
            vals = []
            for f, x in fields:
                cv = const_value(x, structs)
                if cv is None:
                    return None
                vals.append((f, cv))
            return StructV(name, tuple(vals))
    return None


def value_to_json(v: Value):
    match v:
        case bool():
            return v
        case int():
            return str(v) if v > 2**53 else v
        case UnitV():
            return None
        case MapV(_, entries):
            return {str(k): value_to_json(x) for k, x in entries}
        case StructV(_, fields):
            return {f: value_to_json(x) for f, x in fields}
    raise TypeError(v)
