import os
import subprocess
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from minisol import ast as A
from minisol.inference import Options, hard_clauses, signatures
from minisol.logic import (
    Encoder, encode_env_guards, encode_subtyping, encode_type_bounds, horn_clauses, integralize, render,
    to_horn_script, to_validity_script, validity_script,
)
from minisol.solver import Invalid, Sat, SolverConfig, check_validity, eval_term, solve_chc
from minisol.typecheck import Binding, Lock, Mode, Obligation, generate_constraints

from minisol.cli import load

from conftest import CORPUS_FILES

GOLDEN = Path(__file__).parent / "golden"
TRUE = A.BoolLit(True)


def golden(name: str, text: str) -> None:
    path = GOLDEN / name
    if os.environ.get("MINISOL_UPDATE_GOLDEN"):
        path.write_text(text)
    assert text == path.read_text()


def v(name):
    return A.Var(name)


def example_obligation(with_guard: bool = True) -> Obligation:
    """Γ = {a : {ν = b + c}, b, c, d : uint}, γ = {c ≥ d} ⊢ {ν = a} <: {ν ≥ d}."""
    env = (
        Binding("b", A.UINT), Binding("c", A.UINT), Binding("d", A.UINT),
        Binding("a", A.UINT, A.BinOp("==", A.Nu(), A.BinOp("+", v("b"), v("c")))),
    )
    guards = (A.BinOp(">=", v("c"), v("d")),) if with_guard else ()
    return Obligation("f", 0, "hard", "let-annot", None, env, guards, (), (), Lock.UNLOCKED, A.UINT,
                      A.BinOp("==", A.Nu(), v("a")), A.BinOp(">=", A.Nu(), v("d")))


# ------------------------------------------------------------ formulas


def test_uint_bounds():
    enc = Encoder({})
    enc.declare("x", A.UINT)
    assert render(encode_type_bounds(enc, v("x"), A.UINT)) == "(and (<= 0.0 |x|) (<= |x| MAXINT))"


def test_bool_bounds_are_trivial():
    enc = Encoder({})
    enc.declare("b", A.BOOL)
    assert encode_type_bounds(enc, v("b"), A.BOOL) == "true"


def test_empty_context_is_true():
    assert encode_env_guards(Encoder({}), [], [], []) == "true"


def test_sum_annotation_encoding():
    enc = Encoder({})
    env = [Binding("tot", A.UINT), Binding("bals", A.MapType(A.UINT), A.BinOp("<=", A.Sum(A.Nu()), v("tot")))]
    text = render(encode_env_guards(enc, env, [], []))
    assert "(<= 0.0 (sum__1 |bals|))" in text
    assert "(<= (sum__1 |bals|) |tot|)" in text
    assert "(<= |tot| MAXINT)" in text
    assert enc.funs["sum__1"] == (("(Array Real Real)",), "Real")


def test_example_formula_shape():
    f = render(encode_subtyping(Encoder({}), example_obligation()))
    assert "(= |a| (+ |b| |c|))" in f
    assert "(>= |c| |d|)" in f
    assert f.endswith("(>= |a| |d|))")


def test_example_script_golden():
    golden("example_validity.smt2", validity_script(example_obligation(), {}))


def test_scripts_are_deterministic():
    assert validity_script(example_obligation(), {}) == validity_script(example_obligation(), {})


def test_false_is_invalid(solver):
    enc = Encoder({})
    assert isinstance(check_validity(to_validity_script("false", enc), solver), Invalid)


def test_top_consequent():
    ob = example_obligation()
    ob = Obligation(*[getattr(ob, f) for f in ("fn", "seq", "kind", "label", "loc", "env", "guards", "facts",
                                               "prior", "lock", "base", "lhs")], TRUE)
    assert encode_subtyping(Encoder({}), ob)[2] == "true"


# ------------------------------------------------------------ integrality


def test_integralize_polarity():
    f = ("=>", ("<", "a", "b"), ("<=", "a", "b"))
    assert render(integralize(f)) == "(=> (<= (+ a 1.0) b) (< a (+ b 1.0)))"


def test_integralize_skips_fractional_terms():
    f = ("=>", ("<", ("*", "0.5", "a"), "b"), "false")
    assert integralize(f) == f


ATOMS = st.sampled_from(["x", "y", "z", "1.0", "0.0", "3.0", ("+", "x", "1.0"), ("*", "2.0", "y"), ("-", "z", "x")])


def _formulas():
    comparisons = st.builds(lambda op, a, b: (op, a, b), st.sampled_from(["<", "<=", ">", ">="]), ATOMS, ATOMS)
    return st.recursive(comparisons, lambda f: st.one_of(
        st.builds(lambda a: ("not", a), f),
        st.builds(lambda a, b: ("and", a, b), f, f),
        st.builds(lambda a, b: ("or", a, b), f, f),
        st.builds(lambda a, b: ("=>", a, b), f, f),
    ), max_leaves=8)


@given(_formulas(), st.lists(st.integers(-3, 6), min_size=3, max_size=3))
@settings(max_examples=400, deadline=None)
def test_integralize_agrees_on_integers(f, xs):
    env = {k: Fraction(n) for k, n in zip("xyz", xs)}
    assert eval_term(integralize(f), env) == eval_term(f, env)


@given(_formulas(), st.lists(st.fractions(-3, 6, max_denominator=4), min_size=3, max_size=3))
@settings(max_examples=400, deadline=None)
def test_integralize_is_weaker_over_reals(f, xs):
    """Where the original holds at a real point, so does the rewritten formula."""
    env = dict(zip("xyz", xs))
    if eval_term(f, env):
        assert eval_term(integralize(f), env)


# ------------------------------------------------------------ Horn clauses


def test_mint_commit_clause_structure(erc20_auto):
    cs = generate_constraints(erc20_auto, Mode.INFER)
    commits = [o for o in cs.hard if o.fn == "mint" and o.label == "commit"]
    clauses = [c for o in commits for c in horn_clauses(o, erc20_auto.struct_table())]
    assert [c.head[0] for c in clauses] == ["I_1", "I_2", "I_3"]
    for c in clauses:
        body_preds = [a[0] for a in c.body if isinstance(a, tuple) and a[0].startswith("I_")]
        assert body_preds == ["I_1", "I_2", "I_3"]
        assert c.head[1:3] == ("|owner1|", "|tot2|")


def test_horn_script_golden(erc20_auto):
    cs = generate_constraints(erc20_auto, Mode.INFER)
    opts = Options()
    sigs = signatures(cs, opts)
    assert sigs == {f"I_{k}": ("Real", "Real", "Real") for k in (1, 2, 3)}
    map_add = cs.ordered_soft()[2]
    goal = horn_clauses(map_add, erc20_auto.struct_table(), origin="map add")
    golden("erc20_auto_map_add.smt2", to_horn_script(hard_clauses(cs, opts) + goal, sigs))


def test_empty_horn_script_is_sat(solver):
    assert isinstance(solve_chc(to_horn_script([], {}), solver), Sat)


def _z3_accepts(script: str) -> str:
    exe = SolverConfig().resolve()
    return subprocess.run([exe, "-in", "-smt2", "-T:20"], input=script, capture_output=True, text=True).stdout


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.name)
def test_every_script_is_well_sorted(path):
    c = load(str(path))
    structs = c.struct_table()
    cs = generate_constraints(c, Mode.INFER)
    for ob in cs.obligations:
        enc = Encoder(structs, sigma={p: (tuple(f"x!{i}" for i in range(len(s))), "true")
                                      for p, s in signatures(cs, Options()).items()})
        out = _z3_accepts(to_validity_script(encode_subtyping(enc, ob), enc))
        assert "error" not in out, out
    sigs = signatures(cs, Options())
    script = to_horn_script(hard_clauses(cs, Options()), sigs)
    assert "error" not in _z3_accepts(script)
