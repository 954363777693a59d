import dataclasses
import random

import pytest
from hypothesis import given, strategies as st

from minisol import ast as A
from minisol.errors import DomainError
from minisol.fuzz import FuzzConfig, fuzz, slot_values
from minisol.inference import Status, run
from minisol.interpreter import (
    REQUIRE_FAILED, RUNTIME_CHECK, STUCK, Aborted, Completed, Interpreter, eval_refinement,
)
from minisol.syntax import parse_contract
from minisol.typecheck import Mode
from minisol.validate import fold_constants, validate
from minisol.values import MapV, StructV, const_sum, zero_val

from conftest import CORPUS
from minisol.cli import load

S = A.StructType("S")


def compile_src(src: str) -> A.Contract:
    c = parse_contract(src)
    assert validate(c) == []
    return fold_constants(c)


# ------------------------------------------------------------ aggregation


def test_struct_map_sums():
    v = MapV(S, tuple((i, StructV("S", (("x_a", i), ("x_b", 1)))) for i in range(1, 11)))
    assert const_sum(("x_a",), v) == 55
    assert const_sum(("x_b",), v) == 10


def test_nested_map_sums():
    v2 = StructV("S", (("a", MapV(A.UINT, ((4, 6), (10, 3)))),))
    v = MapV(S, ((1, StructV("S", (("a", MapV(A.UINT, ((5, 11),))),))), (2, v2)))
    assert const_sum(("a",), v) == 20
    assert const_sum(("a",), v2) == 9


def test_empty_path_and_empty_map():
    assert const_sum((), MapV(A.UINT)) == 0
    assert const_sum((), 7) == 7


def test_path_errors():
    with pytest.raises(DomainError):
        const_sum(("x",), 3)
    with pytest.raises(DomainError):
        const_sum((), StructV("S", (("x", 1),)))


def test_zero_values():
    structs = {"S": A.StructDecl("S", (("a", A.UINT), ("b", A.BOOL)))}
    assert zero_val(A.UINT, structs) == 0
    assert zero_val(A.BOOL, structs) is False
    assert zero_val(A.MapType(S), structs) == MapV(S, ())
    assert zero_val(S, structs) == StructV("S", (("a", 0), ("b", False)))
    assert MapV(A.UINT).get(9, structs) == 0


@given(st.dictionaries(st.integers(0, 8), st.integers(0, 2**70), max_size=6),
       st.integers(0, 8), st.integers(0, 2**70))
def test_update_equation(entries, key, value):
    before = MapV(A.UINT, tuple(sorted(entries.items())))
    after = before.set(key, value)
    assert const_sum((), after) == const_sum((), before) - before.get(key, {}) + value


# ------------------------------------------------------------ execution


@pytest.fixture(scope="module")
def token():
    return load(str(CORPUS / "erc20.msol"))


def deployed(c, owner=1, seed=0):
    interp = Interpreter(c, random.Random(seed))
    out = interp.construct([owner], owner)
    assert isinstance(out, Completed)
    return interp, out.store


def test_mint_and_transfer(token):
    interp, store = deployed(token)
    out = interp.run_function("mint", [10], store, sender=1)
    assert isinstance(out, Completed) and out.events == ()
    store = out.store
    assert store["tot"] == 10 and store["bals"].get(1, {}) == 10
    out = interp.run_function("transfer", [2, 4], store, sender=1)
    assert out.store["bals"].entries == ((1, 6), (2, 4))
    bals = next(sv for sv in token.state_vars if sv.name == "bals")
    assert eval_refinement(bals.type.qual, out.store, {}, nu=out.store["bals"])


def test_failed_require_keeps_store(token):
    interp, store = deployed(token)
    out = interp.run_function("mint", [10], store, sender=3)
    assert isinstance(out, Aborted) and out.cause == REQUIRE_FAILED
    assert store["tot"] == 0


def test_abort_after_partial_work_is_transactional():
    c = compile_src("""contract C {
    a : uint;
    fun f(x : uint) {
        fetch a as a1;
        let a2 : uint = a1 + x;
        commit a2 to a;
        require(x < 5);
    }
}""")
    interp = Interpreter(c)
    store = interp.construct([]).store
    out = interp.run_function("f", [7], store)
    assert isinstance(out, Aborted)
    assert store == {"a": 0}
    assert interp.run_function("f", [3], store).store == {"a": 3}


SUB = """contract C {
    fun f(x : uint, y : uint) : uint {
        let z : uint = x - y;
        return z;
    }
}"""


def test_unguarded_underflow_is_stuck():
    c = compile_src(SUB)
    out = Interpreter(c).run_function("f", [1, 2], {})
    assert isinstance(out, Aborted) and out.cause == STUCK
    [ev] = out.events
    assert ev.kind == "OverflowWouldOccur" and ev.operands == (1, 2)


def test_guarded_site_aborts_as_runtime_check():
    c = compile_src(SUB)
    [ev] = Interpreter(c).run_function("f", [1, 2], {}).events
    site = ev.site
    assert site[0] == "f" and site[3] == "-"
    out = Interpreter(c, guarded=frozenset({site})).run_function("f", [1, 2], {})
    assert out == Aborted(site, RUNTIME_CHECK, out.events)
    assert out.events[0].site == site


def test_unguarded_addition_overflow_is_recorded():
    c = compile_src("contract C { fun f(x : uint) : uint { let y : uint = x + 1; return y; } }")
    out = Interpreter(c).run_function("f", [A.MAX_INT], {})
    assert isinstance(out, Completed)
    assert [e.kind for e in out.events] == ["OverflowWouldOccur"]


def test_havoc_is_deterministic_per_seed():
    c = compile_src("contract C { fun f() : uint { let x : uint = havoc uint; return x; } }")
    a = Interpreter(c, random.Random(3)).run_function("f", [], {})
    b = Interpreter(c, random.Random(3)).run_function("f", [], {})
    assert a == b


def test_slot_values_follow_family_order():
    c = load(str(CORPUS / "nested.msol"))
    interp, store = deployed(c)
    store = interp.run_function("mint", [5, 2], store, sender=1).store
    # owner, tot, Sum(Fld_bal(Flatten(usrs))), Sum(Fld_frozen(Flatten(usrs)))
    assert slot_values(c, store) == [1, 5, 5, 0]


# ------------------------------------------------------------ fuzzing power


def test_fuzz_catches_a_wrong_safe_verdict(solver):
    c = load(str(CORPUS / "erc20_norequire.msol"))
    report = run(c, Mode.INFER, solver)
    lying = dataclasses.replace(report, verdicts=[dataclasses.replace(v, status=Status.SAFE)
                                                  for v in report.verdicts])
    stats = fuzz(c, lying, FuzzConfig(runs=200))
    assert any(v.prop == "a" for v in stats.violations)
    assert fuzz(c, report, FuzzConfig(runs=200)).ok


def test_fuzz_catches_a_wrong_invariant(erc20_auto, solver):
    report = run(erc20_auto, Mode.INFER, solver)
    wrong = dict(report.sigma_entries)
    formals = wrong["I_2"][0]
    wrong["I_2"] = (formals, ("<=", formals[1], "0.0"))  # tot stays zero
    stats = fuzz(erc20_auto, report, FuzzConfig(runs=200), sigma=wrong)
    assert {v.prop for v in stats.violations} == {"c"}


def test_fuzz_is_reproducible(erc20_auto, solver):
    report = run(erc20_auto, Mode.INFER, solver)
    a = fuzz(erc20_auto, report, FuzzConfig(runs=50, seed=4))
    b = fuzz(erc20_auto, report, FuzzConfig(runs=50, seed=4))
    assert a == b
