"""Command-line entry point: check, infer, run and the debug dumps."""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import ast as A
from .errors import Diagnostic, MiniSolError, render_diagnostics
from .inference import Options, hard_clauses, obligation_script, run, signatures
from .interpreter import Aborted, Completed, Interpreter
from .logic import horn_clauses, to_horn_script
from .solver import DEFAULT_TIMEOUT_MS, SolverConfig
from .syntax import format_base, format_expr, parse_contract
from .templates import format_path, template_family
from .typecheck import Mode, generate_constraints
from .validate import fold_constants, validate
from .values import UNIT_V, value_to_json

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_HARD_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", help="solver executable (default: $MINISOL_SOLVER, then z3 on PATH)")
    p.add_argument("--timeout-ms", type=int, default=DEFAULT_TIMEOUT_MS, help="per-query timeout")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--no-soft", action="store_true", help="treat every safety check as a hard constraint")
    p.add_argument("--no-nested", action="store_true", help="templates only for top-level Map(UInt)")
    p.add_argument("--no-infer", action="store_true", help="skip invariant inference")
    p.add_argument("--uniform-assumptions", action="store_true",
                   help="give hard constraints the prior safety assumptions in inference queries")
    p.add_argument("--accumulate-sigma", action="store_true",
                   help="feed the current interpretation back into later inference queries")
    p.add_argument("--chc-arrays", action="store_true", help="pass map components to predicates as arrays")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="minisol", description="Overflow checking and invariant inference for MiniSol contracts.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_ in (("check", "verify with the given state-variable annotations"),
                        ("infer", "infer state-variable invariants, then verify")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("file")
        _analysis_flags(p)

    p = sub.add_parser("run", help="execute one function with the interpreter")
    p.add_argument("file")
    p.add_argument("--fn", required=True, help="function to call (constructor to only construct)")
    p.add_argument("--args", nargs="*", default=[], help="arguments: naturals or true/false")
    p.add_argument("--ctor-args", nargs="*", default=[], help="constructor arguments")
    p.add_argument("--sender", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", action="store_true", help="print events as JSON lines")

    p = sub.add_parser("emit-smt", help="print the solver scripts")
    p.add_argument("file")
    p.add_argument("--mode", choices=("check", "infer"), default="check")
    _analysis_flags(p)

    p = sub.add_parser("emit-obligations", help="print the generated obligations")
    p.add_argument("file")
    p.add_argument("--mode", choices=("check", "infer"), default="check")
    p.add_argument("--no-nested", action="store_true")
    p.add_argument("--format", choices=("json", "text"), default="text")

    p = sub.add_parser("emit-templates", help="print the template families of the state variables")
    p.add_argument("file")
    p.add_argument("--no-nested", action="store_true")
    return ap


def options_from(args: argparse.Namespace) -> Options:
    return Options(no_soft=args.no_soft, no_nested=args.no_nested, no_infer=args.no_infer,
                   uniform_assumptions=args.uniform_assumptions, accumulate_sigma=args.accumulate_sigma,
                   chc_arrays=args.chc_arrays)


def load(path: str) -> A.Contract:
    """Parse, validate and fold; raises MiniSolError or _Invalid."""
    text = Path(path).read_text()
    c = parse_contract(text, path)
    diags = validate(c)
    if diags:
        raise _Invalid(diags)
    return fold_constants(c)


class _Invalid(Exception):
    def __init__(self, diags: list[Diagnostic]):
        super().__init__("invalid contract")
        self.diags = diags


def _parse_value(text: str):
    match text:
        case "true":
            return True
        case "false":
            return False
        case "()":
            return UNIT_V
    try:
        n = int(text, 0)
    except ValueError:
        raise ValueError(f"cannot read argument {text!r}") from None
    if n < 0 or n > A.MAX_INT:
        raise ValueError(f"argument {text} is not a natural below MaxInt")
    return n



def _solver_config(args) -> SolverConfig:
    cfg = SolverConfig(executable=args.solver, timeout_ms=args.timeout_ms)
    cfg.resolve()
    return cfg


def cmd_analyze(args, mode: Mode) -> int:
    c = load(args.file)
    cfg = _solver_config(args)
    report = run(c, mode, cfg, options_from(args))
    if args.format == "json":
        print(json.dumps(report.to_json(), indent=2))
    else:
        print(report.to_text())
    return EXIT_HARD_FAILURE if report.hard_failures else EXIT_OK


def cmd_run(args) -> int:
    c = load(args.file)
    try:
        fn_args = [_parse_value(a) for a in args.args]
        ctor_args = [_parse_value(a) for a in args.ctor_args]
    except ValueError as exc:
        print(f"minisol: {exc}", file=sys.stderr)
        return EXIT_ERROR
    target = c.function(args.fn) if args.fn != A.CTOR else c.ctor
    if args.fn != A.CTOR and target is None:
        print(f"minisol: no function {args.fn}", file=sys.stderr)
        return EXIT_ERROR
    interp = Interpreter(c, random.Random(args.seed))
    outcome = interp.construct(ctor_args, args.sender)
    if args.fn != A.CTOR and isinstance(outcome, Completed):
        if len(fn_args) != len(target.params):
            print(f"minisol: {args.fn} expects {len(target.params)} arguments", file=sys.stderr)
            return EXIT_ERROR
        outcome = interp.run_function(args.fn, fn_args, outcome.store, args.sender)
    if args.trace:
        for ev in outcome.events:
            print(json.dumps({"event": ev.to_json()}))
    match outcome:
        case Completed(store, value, _):
            print(json.dumps({"outcome": "completed", "value": value_to_json(value),
                              "store": {k: value_to_json(v) for k, v in store.items()}}))
        case Aborted(site, cause, _):
            where = None if site is None else {"function": site[0], "line": site[1], "column": site[2], "op": site[3]}
            print(json.dumps({"outcome": "aborted", "cause": cause, "site": where}))
    return EXIT_OK


def cmd_emit_smt(args) -> int:
    c = load(args.file)
    opts = options_from(args)
    mode = Mode(args.mode)
    cs = generate_constraints(c, mode, opts.nested)
    structs = c.struct_table()
    if mode is Mode.CHECK:
        for ob in cs.obligations:
            fn, line, col, label = ob.site
            script, _ = obligation_script(ob, structs, opts.nested, None)
            print(f"; {ob.kind} {label} {fn}:{line}:{col}")
            print(script if script is not None else "; consequent is trivially true")
        return EXIT_OK
    sigs = signatures(cs, opts)
    hards = hard_clauses(cs, opts)
    if opts.no_soft:
        print(_no_soft_script(cs, opts, sigs, hards))
        return EXIT_OK
    for s in cs.ordered_soft():
        fn, line, col, label = s.site
        goal = horn_clauses(s, structs, opts.nested, prior=True, chc_arrays=opts.chc_arrays,
                            origin=f"soft {label} {fn}:{line}:{col}")
        print(f"; query for soft {label} {fn}:{line}:{col}")
        print(to_horn_script(hards + goal, sigs))
    return EXIT_OK


def _no_soft_script(cs, opts, sigs, hards) -> str:
    structs = cs.contract.struct_table()
    clauses = list(hards)
    for s in cs.ordered_soft():
        clauses += horn_clauses(s, structs, opts.nested, prior=False, chc_arrays=opts.chc_arrays, origin=s.label)
    return to_horn_script(clauses, sigs)


def cmd_emit_obligations(args) -> int:
    c = load(args.file)
    cs = generate_constraints(c, Mode(args.mode), not args.no_nested)
    rows = []
    for ob in cs.obligations:
        fn, line, col, label = ob.site
        rows.append({
            "function": fn, "line": line, "column": col, "kind": ob.kind, "label": label,
            "env": [f"{b.name} : {{{format_base(b.base)} | {format_expr(b.qual)}}}" for b in ob.env],
            "guards": [format_expr(g) for g in ob.guards],
            "facts": [format_expr(f) for f in ob.facts],
            "prior": [format_expr(p) for p in ob.prior],
            "lhs": format_expr(ob.lhs),
            "consequent": format_expr(ob.consequent),
        })
    if args.format == "json":
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    for r in rows:
        print(f"{r['kind']} {r['label']} {r['function']}:{r['line']}:{r['column']}")
        for b in r["env"]:
            print(f"    {b}")
        for g in r["guards"] + r["facts"] + r["prior"]:
            print(f"    | {g}")
        print(f"    |- {{v | {r['lhs']}}} <: {{v | {r['consequent']}}}")
    return EXIT_OK


def cmd_emit_templates(args) -> int:
    c = load(args.file)
    structs = c.struct_table()
    for sv in c.state_vars:
        if not isinstance(sv.type.base, A.MapType):
            continue
        print(f"{sv.name} : {format_base(sv.type.base)}")
        for m in template_family(sv.type.base.value, structs, not args.no_nested):
            print(f"    ({m.outer}, {m.inner}, {format_path(m.path)})")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        match args.command:
            case "check":
                return cmd_analyze(args, Mode.CHECK)
            case "infer":
                return cmd_analyze(args, Mode.INFER)
            case "run":
                return cmd_run(args)
            case "emit-smt":
                return cmd_emit_smt(args)
            case "emit-obligations":
                return cmd_emit_obligations(args)
            case "emit-templates":
                return cmd_emit_templates(args)
    except _Invalid as inv:
        fmt = getattr(args, "format", "text")
        print(render_diagnostics(inv.diags, fmt), file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"minisol: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except MiniSolError as exc:
        print(f"minisol: {exc}", file=sys.stderr)
        return EXIT_HARD_FAILURE if exc.code in ("LockViolation", "JoinLockMismatch") else EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
