import pytest

from minisol import ast as A
from minisol.inference import (
    Options, Reason, Sigma, Status, check_sigma_implies, infer_types, run, signatures,
)
from minisol.logic import TRUE_T
from minisol.solver import Valid
from minisol.syntax import parse_contract
from minisol.typecheck import Mode, generate_constraints
from minisol.validate import fold_constants, validate

from conftest import CORPUS
from minisol.cli import load

SAFE, CHECK = Status.SAFE, Status.NEEDS_CHECK

# (function, line, column, op) -> status for the annotated token; the
# unannotated variant has the same layout.
TOKEN = {
    ("mint", 17, 22, "+"): CHECK,
    ("mint", 18, 32, "+"): SAFE,
    ("mint", 19, 79, "+"): SAFE,
    ("transfer", 26, 79, "-"): SAFE,
    ("transfer", 27, 77, "+"): SAFE,
}


def statuses(report) -> dict:
    return {(v.function, v.line, v.column, v.op): v.status for v in report.verdicts}


def safe_sites(report) -> set:
    return {k for k, s in statuses(report).items() if s is SAFE}


def compile_src(src: str) -> A.Contract:
    c = parse_contract(src)
    assert validate(c) == []
    return fold_constants(c)


@pytest.fixture(scope="module")
def token_infer(erc20_auto, solver):
    return run(erc20_auto, Mode.INFER, solver)


# ------------------------------------------------------------ worked examples


def test_annotated_token_check_mode(erc20, solver):
    r = run(erc20, Mode.CHECK, solver)
    assert statuses(r) == TOKEN
    assert r.hard_failures == []
    assert all(v.reason is Reason.FINALIZE for v in r.verdicts if v.safe)


def test_unannotated_token_infer_mode(token_infer):
    assert statuses(token_infer) == TOKEN
    assert token_infer.hard_failures == []


def test_inferred_invariant_implies_supply_bound(erc20_auto, solver):
    cs = generate_constraints(erc20_auto, Mode.INFER)
    res = infer_types(cs, solver)
    sorts = signatures(cs, Options())["I_3"]
    # slots: owner, tot, sum(bals)
    assert check_sigma_implies(res.sigma, "I_3", sorts, lambda x: ("<=", x[2], x[1]), solver) == Valid()


def test_owner_and_supply_predicates_stay_trivial(token_infer):
    assert token_infer.sigma["I_1"] == "true"
    assert token_infer.sigma["I_2"] == "true"


def test_nested_struct_site(nested, solver):
    r = run(nested, Mode.INFER, solver)
    assert statuses(r)[("mint", 26, 45, "+")] is SAFE
    assert statuses(r)[("mint", 22, 22, "+")] is CHECK


def test_nested_site_needs_templates(nested, solver):
    r = run(nested, Mode.INFER, solver, Options(no_nested=True))
    assert statuses(r)[("mint", 26, 45, "+")] is CHECK


def test_no_soft_ablation_on_unguarded_transfer(solver):
    c = load(str(CORPUS / "erc20_norequire.msol"))
    default = statuses(run(c, Mode.INFER, solver))
    ablated = statuses(run(c, Mode.INFER, solver, Options(no_soft=True)))
    assert set(ablated.values()) == {CHECK}
    # the unguarded subtraction fails; the addition after it may assume its check
    assert default[("transfer", 25, 79, "-")] is CHECK
    assert {k for k, s in default.items() if s is SAFE} == {
        ("mint", 18, 32, "+"), ("mint", 19, 79, "+"), ("transfer", 26, 77, "+")}


# ------------------------------------------------------------ properties


def test_empty_contract(solver):
    r = run(compile_src("contract E { }"), Mode.INFER, solver)
    assert r.verdicts == [] and r.hard_failures == [] and r.solver_queries == 0


def test_trivial_annotation_keeps_map_additions(solver):
    src = (CORPUS / "erc20.msol").read_text().replace("sat { sum(v) <= tot }", "sat { true }")
    r = run(compile_src(src), Mode.CHECK, solver)
    s = statuses(r)
    assert s[("mint", 19, 79, "+")] is CHECK
    assert s[("transfer", 27, 77, "+")] is CHECK


@pytest.mark.parametrize("auto, annotated", [("erc20_auto", "erc20"), ("nested", "nested_annotated")])
def test_more_information_never_loses_sites(auto, annotated, solver):
    a = load(str(CORPUS / f"{auto}.msol"))
    b = load(str(CORPUS / f"{annotated}.msol"))
    bare = safe_sites(run(a, Mode.INFER, solver, Options(no_infer=True)))
    inferred = safe_sites(run(a, Mode.INFER, solver))
    checked = safe_sites(run(b, Mode.CHECK, solver))
    assert bare <= inferred <= checked


def test_failing_commit_withdraws_dependent_verdicts(solver):
    src = """contract C {
    tot : uint sat { v <= 100 };
    fun f() {
        fetch tot as t1;
        let t2 : uint = t1 + 1;
        commit t2 to tot;
    }
}"""
    r = run(compile_src(src), Mode.CHECK, solver)
    [v] = r.verdicts
    assert v.status is CHECK and v.reason is Reason.INVALID
    [d] = r.hard_failures
    assert d.code == "InvariantViolation"


def test_conjoin_only_strengthens():
    s = Sigma({"I": (("a",), ("<=", "a", "5.0"))})
    s.conjoin({"I": (("b",), (">=", "b", "1.0"))})
    formals, body = s.entries["I"]
    assert formals == ("a",)
    assert body == ("and", ("<=", "a", "5.0"), (">=", "a", "1.0"))


def test_top_sigma():
    s = Sigma.top({"I_1": ("Real", "Real")})
    assert s.entries == {"I_1": (("x!0", "x!1"), TRUE_T)}


def test_queries_follow_the_evaluation_order(erc20_auto, solver):
    cs = generate_constraints(erc20_auto, Mode.INFER)
    res = infer_types(cs, solver)
    assert [q.site for q in res.log] == [o.site for o in cs.ordered_soft()]
    assert [q.outcome for q in res.log] == ["unsat", "sat", "sat", "sat", "sat"]


def test_inference_is_deterministic(erc20_auto, solver):
    a = run(erc20_auto, Mode.INFER, solver).to_json(with_time=False)
    b = run(erc20_auto, Mode.INFER, solver).to_json(with_time=False)
    assert a == b


FLAGS = [Options(uniform_assumptions=True), Options(accumulate_sigma=True), Options(chc_arrays=True)]


@pytest.mark.parametrize("opts", FLAGS, ids=["uniform", "accumulate", "arrays"])
@pytest.mark.parametrize("name", ["erc20_auto", "nested", "vault"])
def test_experimental_flags_agree_with_default(name, opts, solver):
    c = load(str(CORPUS / f"{name}.msol"))
    assert statuses(run(c, Mode.INFER, solver, opts)) == statuses(run(c, Mode.INFER, solver))


def test_no_infer_keeps_only_local_sites(erc20_auto, solver):
    r = run(erc20_auto, Mode.INFER, solver, Options(no_infer=True))
    assert r.mode == "infer+no_infer"
    assert r.safe_count == 2
    assert r.sigma == {}
