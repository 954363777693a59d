import json

import pytest

from minisol.cli import main

from conftest import CORPUS

TOKEN = str(CORPUS / "erc20.msol")
AUTO = str(CORPUS / "erc20_auto.msol")


def invoke(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, text: str) -> str:
    p = tmp_path / "c.msol"
    p.write_text(text)
    return str(p)


def test_check_json_report(capsys):
    code, out, _ = invoke(capsys, "check", TOKEN, "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert report["schema"] == 1
    assert report["contractName"] == "ExampleToken"
    assert report["mode"] == "check"
    assert report["stats"]["softTotal"] == 5 and report["stats"]["safeCount"] == 4
    assert set(report["verdicts"][0]) == {"function", "line", "column", "op", "status", "reason"}
    assert report["hardFailures"] == []


def test_infer_text_report(capsys):
    code, out, _ = invoke(capsys, "infer", AUTO)
    assert code == 0
    assert "4/5 arithmetic sites SAFE" in out
    assert "invariant I_3 :=" in out


def test_hard_failure_exits_2(tmp_path, capsys):
    path = write(tmp_path, """contract C {
    tot : uint sat { v <= 100 };
    fun f() { fetch tot as t1; let t2 : uint = t1 + 1; commit t2 to tot; }
}""")
    code, out, _ = invoke(capsys, "check", path, "--format", "json")
    assert code == 2
    assert json.loads(out)["hardFailures"][0]["code"] == "InvariantViolation"


def test_lock_violation_exits_2(tmp_path, capsys):
    path = write(tmp_path, "contract C { a : uint; fun f() { fetch a as a1; } }")
    code, _, err = invoke(capsys, "check", path)
    assert code == 2 and err


def test_parse_error_exits_1(tmp_path, capsys):
    code, _, err = invoke(capsys, "check", write(tmp_path, "contract {"))
    assert code == 1
    assert "error" in err


def test_missing_file_exits_1(tmp_path, capsys):
    code, _, _ = invoke(capsys, "check", str(tmp_path / "absent.msol"))
    assert code == 1


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["check"])
    assert exc.value.code == 1


def test_missing_solver_exits_1(tmp_path, capsys):
    code, _, _ = invoke(capsys, "check", TOKEN, "--solver", str(tmp_path / "nope"))
    assert code == 1


def test_empty_contract(tmp_path, capsys):
    code, out, _ = invoke(capsys, "infer", write(tmp_path, "contract E { }"), "--format", "json")
    assert code == 0
    stats = json.loads(out)["stats"]
    assert stats["softTotal"] == 0 and stats["safeCount"] == 0


def test_run_completed(capsys):
    code, out, _ = invoke(capsys, "run", TOKEN, "--fn", "mint", "--args", "10", "--ctor-args", "1", "--sender", "1")
    assert code == 0
    line = json.loads(out.strip().splitlines()[-1])
    assert line["outcome"] == "completed"
    assert line["store"]["tot"] == 10


def test_run_aborted_with_trace(tmp_path, capsys):
    path = write(tmp_path, "contract C { fun f(x : uint, y : uint) : uint { let z : uint = x - y; return z; } }")
    code, out, _ = invoke(capsys, "run", path, "--fn", "f", "--args", "1", "2", "--trace")
    assert code == 0
    event, outcome = [json.loads(x) for x in out.strip().splitlines()]
    assert event["event"]["kind"] == "OverflowWouldOccur"
    assert outcome["outcome"] == "aborted" and outcome["cause"] == "stuck"


def test_run_rejects_bad_argument(capsys):
    code, _, _ = invoke(capsys, "run", TOKEN, "--fn", "mint", "--args", "-3", "--ctor-args", "1")
    assert code == 1


def test_run_unknown_function(capsys):
    code, _, _ = invoke(capsys, "run", TOKEN, "--fn", "burn")
    assert code == 1


def test_emit_smt_check(capsys):
    code, out, _ = invoke(capsys, "emit-smt", TOKEN)
    assert code == 0
    assert out.count("(check-sat)") == out.count("; soft") + out.count("; hard") - out.count("trivially true")


def test_emit_smt_infer(capsys):
    code, out, _ = invoke(capsys, "emit-smt", AUTO, "--mode", "infer")
    assert code == 0
    assert out.count("(set-logic HORN)") == 5


def test_emit_smt_no_soft_is_one_system(capsys):
    code, out, _ = invoke(capsys, "emit-smt", AUTO, "--mode", "infer", "--no-soft")
    assert code == 0
    assert out.count("(set-logic HORN)") == 1


@pytest.mark.parametrize("fmt", ["text", "json"])
def test_emit_obligations(capsys, fmt):
    code, out, _ = invoke(capsys, "emit-obligations", TOKEN, "--format", fmt)
    assert code == 0
    if fmt == "json":
        rows = json.loads(out)
        assert sum(r["kind"] == "soft" for r in rows) == 5
    else:
        assert "sum(v) <= tot2" in out


def test_emit_templates(capsys):
    code, out, _ = invoke(capsys, "emit-templates", str(CORPUS / "nested.msol"))
    assert code == 0
    assert "Sum(Fld_bal(Flatten(□)))" in out
    code, out, _ = invoke(capsys, "emit-templates", str(CORPUS / "nested.msol"), "--no-nested")
    assert "Fld_bal" not in out
