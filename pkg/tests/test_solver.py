import time
from fractions import Fraction

import pytest

from minisol.errors import ModelParseError, ProtocolError, SolverNotFound
from minisol.logic import Encoder, HornClause, encode_subtyping, to_horn_script, to_validity_script
from minisol.solver import (
    Invalid, QueryCounter, Sat, SolverConfig, Unknown, Unsat, Valid, check_validity, eval_term, parse_model,
    solve_chc,
)

from test_logic import example_obligation


def fake_solver(tmp_path, body: str) -> str:
    exe = tmp_path / "fake-solver"
    exe.write_text("#!/bin/sh\ncat > /dev/null\n" + body + "\n")
    exe.chmod(0o755)
    return str(exe)


def script_for(ob) -> str:
    enc = Encoder({})
    return to_validity_script(encode_subtyping(enc, ob), enc)


# ------------------------------------------------------------ validity


def test_example_valid(solver):
    assert check_validity(script_for(example_obligation()), solver) == Valid()


def test_example_without_guard_invalid(solver):
    assert isinstance(check_validity(script_for(example_obligation(with_guard=False)), solver), Invalid)


def test_negated_true_is_valid(solver):
    assert check_validity(to_validity_script("true", Encoder({})), solver) == Valid()


def test_empty_script_is_protocol_error(solver):
    with pytest.raises(ProtocolError):
        check_validity("", solver)


def test_counter(solver):
    counter = QueryCounter()
    check_validity(to_validity_script("true", Encoder({})), solver, counter)
    check_validity(to_validity_script("false", Encoder({})), solver, counter)
    assert counter.count == 2


# ------------------------------------------------------------ Horn


def clause(variables, body, head):
    return HornClause(tuple(variables), tuple(body), head)


X = [("x", "Real")]


def test_contradictory_pair_is_unsat(solver):
    clauses = [clause(X, [(">", "x", "0.0")], ("I", "x")),
               clause(X, [("I", "x"), (">", "x", "0.0")], "false")]
    assert solve_chc(to_horn_script(clauses, {"I": ("Real",)}), solver) == Unsat()


def test_fact_then_query_at_zero_is_unsat(solver):
    clauses = [clause(X, [], ("I", "x")), clause([], [("I", "0.0")], "false")]
    assert solve_chc(to_horn_script(clauses, {"I": ("Real",)}), solver) == Unsat()


def test_vacuous_goal_is_sat(solver):
    clauses = [clause(X, [], ("I", "x")), clause(X, [("I", "x"), ("<", "x", "x")], "false")]
    r = solve_chc(to_horn_script(clauses, {"I": ("Real",)}), solver, {"I": ("Real",)})
    assert isinstance(r, Sat)
    formals, body = r.model["I"]
    assert eval_term(body, {formals[0]: Fraction(7)}) is True


def test_model_gives_usable_invariant(solver):
    # I(0); I(x) ∧ x < 10 ⟹ I(x + 1); I(x) ⟹ x <= 10
    clauses = [clause([], [], ("I", "0.0")),
               clause(X, [("I", "x"), ("<", "x", "10.0")], ("I", ("+", "x", "1.0"))),
               clause(X, [("I", "x")], ("<=", "x", "10.0"))]
    r = solve_chc(to_horn_script(clauses, {"I": ("Real",)}), solver, {"I": ("Real",)})
    assert isinstance(r, Sat)
    formals, body = r.model["I"]
    assert eval_term(body, {formals[0]: Fraction(0)})
    assert not eval_term(body, {formals[0]: Fraction(11)})


# ------------------------------------------------------------ process handling


def test_timeout_is_bounded(tmp_path):
    cfg = SolverConfig(fake_solver(tmp_path, "sleep 30"), timeout_ms=300)
    start = time.monotonic()
    assert check_validity("(check-sat)\n", cfg) == Unknown("timeout")
    assert time.monotonic() - start < 0.3 + 1.0 + 0.5


def test_silent_solver_is_protocol_error(tmp_path):
    cfg = SolverConfig(fake_solver(tmp_path, "true"))
    with pytest.raises(ProtocolError):
        check_validity("(check-sat)\n", cfg)


def test_solver_error_is_protocol_error(tmp_path):
    cfg = SolverConfig(fake_solver(tmp_path, "echo '(error \"line 1: bad\")'"))
    with pytest.raises(ProtocolError):
        check_validity("(check-sat)\n", cfg)


def test_unknown_answer(tmp_path):
    cfg = SolverConfig(fake_solver(tmp_path, "echo unknown"))
    assert check_validity("(check-sat)\n", cfg) == Unknown("solver-unknown")


def test_missing_solver(tmp_path):
    with pytest.raises(SolverNotFound):
        SolverConfig(str(tmp_path / "absent")).resolve()


def test_environment_override(tmp_path, monkeypatch):
    exe = fake_solver(tmp_path, "echo unsat")
    monkeypatch.setenv("MINISOL_SOLVER", exe)
    assert SolverConfig().resolve() == exe
    assert check_validity("(check-sat)\n", SolverConfig()) == Valid()


def test_nonpositive_timeout_rejected():
    with pytest.raises(ValueError):
        SolverConfig(timeout_ms=0)


# ------------------------------------------------------------ models


MODEL = """(
  (define-fun MAXINT () Real 5.0)
  (define-fun I_3 ((x!0 Real) (x!1 Real) (x!2 Real)) Bool
    (let ((a!1 (<= (+ x!2 (* (- 1.0) x!1)) 0.0)))
      (and a!1 (>= x!0 0.0))))
)"""


def test_parse_model_expands_let_and_skips_constants():
    model = parse_model(MODEL)
    assert list(model) == ["I_3"]
    formals, body = model["I_3"]
    assert formals == ("x!0", "x!1", "x!2")
    assert body == ("and", ("<=", ("+", "x!2", ("*", ("-", "1.0"), "x!1")), "0.0"), (">=", "x!0", "0.0"))


def test_eval_term_exact():
    _, body = parse_model(MODEL)["I_3"]
    env = {"x!0": Fraction(1), "x!1": Fraction(10**70), "x!2": Fraction(10**70)}
    assert eval_term(body, env) is True
    env["x!2"] += 1
    assert eval_term(body, env) is False


def test_unsupported_model_construct():
    with pytest.raises(ModelParseError):
        parse_model("((define-fun I ((x Real)) Bool (exists ((y Real)) (> y x))))")
