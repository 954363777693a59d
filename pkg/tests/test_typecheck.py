import pytest

from minisol import ast as A
from minisol.errors import JoinLockMismatch, LockViolation
from minisol.inference import check_obligation
from minisol.solver import Valid
from minisol.syntax import format_expr, parse_contract
from minisol.typecheck import Mode, generate_constraints
from minisol.validate import fold_constants, validate


def compile_(src: str, mode: Mode = Mode.CHECK, fold: bool = True):
    c = parse_contract(src)
    assert validate(c) == []
    return generate_constraints(fold_constants(c) if fold else c, mode)


def valid(cs, ob, solver) -> bool:
    return isinstance(check_obligation(ob, cs.contract.struct_table(), True, None, solver), Valid)


def test_mint_obligations(erc20):
    cs = generate_constraints(erc20, Mode.CHECK)
    mint = [o for o in cs.obligations if o.fn == "mint"]
    assert [(o.kind, o.label) for o in mint] == [("soft", "+")] * 3 + [("hard", "commit")] * 3
    assert [o.target for o in mint if not o.soft] == ["owner", "tot", "bals"]
    assert format_expr(mint[2].consequent) == "bals1[msg.sender] + amt <= maxint"
    assert format_expr(mint[5].consequent) == "sum(v) <= tot2"


def test_map_add_assumes_earlier_checks(erc20):
    cs = generate_constraints(erc20, Mode.CHECK)
    map_add = [o for o in cs.soft if o.fn == "mint"][2]
    assert [format_expr(p) for p in map_add.prior] == ["tot1 + amt <= maxint"]
    bals1 = next(b for b in map_add.env if b.name == "bals1")
    assert format_expr(bals1.qual) == "sum(v) <= tot1"


def test_check_mode_counts(erc20):
    cs = generate_constraints(erc20, Mode.CHECK)
    assert cs.preds == {}
    assert len(cs.soft) == 5
    assert not any(o.fn == A.CTOR for o in cs.soft)


def test_infer_mode_introduces_one_predicate_per_state_variable(erc20_auto):
    cs = generate_constraints(erc20_auto, Mode.INFER)
    assert sorted(cs.preds) == ["I_1", "I_2", "I_3"]
    assert all(len(p.sorts) == 3 for p in cs.preds.values())


def test_generation_is_deterministic(erc20):
    assert generate_constraints(erc20, Mode.INFER) == generate_constraints(erc20, Mode.INFER)


def test_constant_arithmetic_is_a_trivial_soft(solver):
    cs = compile_("contract C { fun f() { let x : uint = 0 + 0; } }", fold=False)
    [s] = cs.soft
    assert format_expr(s.consequent) == "0 + 0 <= maxint"
    assert valid(cs, s, solver)


def test_no_state_no_arithmetic():
    cs = compile_("contract C { fun f(b : bool) { assert(b || !b); } }")
    assert cs.soft == []
    assert [o.label for o in cs.hard] == ["assert"]


def test_struct_map_literal_aggregates():
    entries = ", ".join(f"{i} -> struct S{{x_a: {i}, x_b: 1}}" for i in range(1, 11))
    src = f"""contract C {{
    struct S {{ x_a : uint; x_b : uint; }}
    fun f() {{
        let m : map(uint => S) = map(S){{{entries}}};
        assert(true);
    }}
}}"""
    cs = compile_(src)
    [ob] = cs.hard
    qual = format_expr(next(b for b in ob.env if b.name == "m").qual)
    assert "sum(fld.x_a(v)) == 55" in qual
    assert "sum(fld.x_b(v)) == 10" in qual


def test_vacuous_assert_is_valid(solver):
    cs = compile_("contract C { fun f() { require(false); assert(false); } }")
    [ob] = cs.hard
    assert ob.label == "assert"
    assert valid(cs, ob, solver)


def test_failing_assert_is_invalid(solver):
    cs = compile_("contract C { fun f(x : uint) { assert(x > 0); } }")
    assert not valid(cs, cs.hard[0], solver)


def test_double_fetch_is_lock_violation():
    src = "contract C { a : uint; fun f() { fetch a as a1; fetch a as a2; commit a2 to a; } }"
    with pytest.raises(LockViolation):
        compile_(src)


def test_fetch_without_commit_is_lock_violation():
    with pytest.raises(LockViolation):
        compile_("contract C { a : uint; fun f() { fetch a as a1; } }")


def test_branches_must_agree_on_lock():
    src = """contract C { a : uint;
    fun f(b : bool) {
        if (b) { fetch a as a1; } else { skip; }
    } }"""
    with pytest.raises(JoinLockMismatch):
        compile_(src)


LOOP = """contract C {
    fun f(n : uint) {
        let i0 : uint = 0;
        while join { i : uint sat { v <= n } = phi(i0, i1) } (i < n) {
            let i1 : uint = i + 1;
        }
    }
}"""


def test_loop_obligations_valid(solver):
    cs = compile_(LOOP)
    labels = [o.label for o in cs.hard]
    assert labels == ["loop-entry", "loop-preserve"]
    assert all(valid(cs, o, solver) for o in cs.hard)
    [inc] = cs.soft
    assert valid(cs, inc, solver)


def test_loop_invariant_too_strong_is_invalid(solver):
    cs = compile_(LOOP.replace("v <= n", "v < n"))
    entry, preserve = cs.hard
    assert not valid(cs, preserve, solver)


def test_branch_priors_are_guarded():
    src = """contract C {
    fun f(b : bool, x : uint) : uint {
        if (b) { let y1 : uint = x + 1; } else { let y2 : uint = x; }
        join { y : uint = phi(y1, y2) }
        let z : uint = x * 2;
        return z;
    }
}"""
    cs = compile_(src)
    mul = cs.soft[-1]
    assert [format_expr(p) for p in mul.prior] == ["!b || x + 1 <= maxint"]


def test_call_arguments_and_annotation(solver):
    src = """contract C {
    pure fun half(x : uint sat { v <= 100 }) : uint sat { v <= 50 } {
        let y : uint = x / 2;
        return y;
    }
    fun f(a : uint) : uint {
        require(a <= 10);
        call r : uint sat { v <= 50 } = half(a);
        return r;
    }
}"""
    cs = compile_(src)
    by_label = {(o.fn, o.label): o for o in cs.hard}
    assert valid(cs, by_label[("f", "call-arg")], solver)
    assert valid(cs, by_label[("half", "return")], solver)
