"""External solver driver over SMT-LIB 2 text, one process per query."""

from __future__ import annotations

import os
import shutil
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .errors import ModelParseError, ProtocolError, SolverNotFound
from .logic import SigmaEntry, Term

DEFAULT_TIMEOUT_MS = 10_000
TEARDOWN_SLACK_S = 1.0


@dataclass(frozen=True)
class SolverConfig:
    executable: str | None = None
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    extra_args: tuple[str, ...] = ()

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")

    def resolve(self) -> str:
        exe = self.executable or os.environ.get("MINISOL_SOLVER") or shutil.which("z3")
        if not exe or not (os.path.isfile(exe) or shutil.which(exe)):
            raise SolverNotFound(f"solver executable not found: {exe or 'z3'}")
        return exe


@dataclass(frozen=True)
class Valid:
    pass


@dataclass(frozen=True)
class Invalid:
    model: str | None = None


@dataclass(frozen=True)
class Unknown:
    reason: str  # timeout | solver-unknown | io-error | model-parse


@dataclass(frozen=True)
class Sat:
    model: dict[str, SigmaEntry] = field(default_factory=dict)


@dataclass(frozen=True)
class Unsat:
    pass


ValidityResult = Valid | Invalid | Unknown
ChcResult = Sat | Unsat | Unknown


@dataclass
class QueryCounter:
    """Counts solver invocations (shared by a pipeline run)."""

    count: int = 0


def _run(script: str, cfg: SolverConfig) -> tuple[str | None, str]:
    """Run the solver; returns (stdout, '') or (None, reason)."""
    exe = cfg.resolve()
    secs = max(1, -(-cfg.timeout_ms // 1000))
    cmd = [exe, "-in", "-smt2", f"-T:{secs}", f"-t:{cfg.timeout_ms}", *cfg.extra_args]
    try:
        proc = subprocess.run(cmd, input=script, capture_output=True, text=True,
                              timeout=cfg.timeout_ms / 1000 + TEARDOWN_SLACK_S)
    except subprocess.TimeoutExpired:
        return None, "timeout"
    except OSError as exc:
        raise SolverNotFound(f"cannot start solver {exe}: {exc}") from exc
    return proc.stdout, ""


def _first_answer(out: str) -> tuple[str, str]:
    lines = [ln.strip() for ln in out.splitlines() if ln.strip()]
    if not lines:
        raise ProtocolError("empty solver response")
    head = lines[0]
    if head in ("sat", "unsat", "unknown", "timeout"):
        return head, "\n".join(lines[1:])
    if head.startswith("(error"):
        raise ProtocolError(f"solver error: {out.strip()[:500]}")
    raise ProtocolError(f"unexpected solver response: {head[:200]}")


def check_validity(script: str, cfg: SolverConfig, counter: QueryCounter | None = None) -> ValidityResult:
    """unsat of the negated implication means Valid."""
    if not script.strip():
        raise ProtocolError("empty script")
    if counter is not None:
        counter.count += 1
    out, reason = _run(script, cfg)
    if out is None:
        return Unknown(reason)
    answer, rest = _first_answer(out)
    match answer:
        case "unsat":
            return Valid()
        case "sat":
            return Invalid(rest or None)
        case "timeout":
            return Unknown("timeout")
    return Unknown("solver-unknown")


def solve_chc(script: str, cfg: SolverConfig, preds: Mapping[str, tuple[str, ...]] | None = None,
              counter: QueryCounter | None = None) -> ChcResult:
    """Solve a HORN script; on sat, interpretations of the declared predicates."""
    if not script.strip():
        raise ProtocolError("empty script")
    if counter is not None:
        counter.count += 1
    out, reason = _run(script, cfg)
    if out is None:
        return Unknown(reason)
    answer, rest = _first_answer(out)
    match answer:
        case "unsat":
            return Unsat()
        case "sat":
            model = parse_model(rest)
            if preds is not None:
                model = {k: v for k, v in model.items() if k in preds}
            return Sat(model)
        case "timeout":
            return Unknown("timeout")
    return Unknown("solver-unknown")


# ------------------------------------------------------------ s-expressions


def tokenize(text: str) -> list[str]:
    toks: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            toks.append(c)
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            toks.append(text[i:j + 1])
            i = j + 1
        elif c == '"':
            j = i + 1
            while j < n and not (text[j] == '"' and (j + 1 >= n or text[j + 1] != '"')):
                j += 2 if text[j] == '"' else 1
            toks.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            toks.append(text[i:j])
            i = j
    return toks


def parse_sexprs(text: str) -> list[Term]:
    toks = tokenize(text)
    pos = 0

    def one() -> Term:
        nonlocal pos
        if pos >= len(toks):
            raise ModelParseError("unexpected end of input")
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while pos < len(toks) and toks[pos] != ")":
                items.append(one())
            if pos >= len(toks):
                raise ModelParseError("unbalanced parentheses")
            pos += 1
            return tuple(items)
        if t == ")":
            raise ModelParseError("unexpected )")
        return t

    out = []
    while pos < len(toks):
        out.append(one())
    return out


SUPPORTED_OPS = {"and", "or", "not", "=>", "=", "<", "<=", ">", ">=", "+", "-", "*", "/", "ite", "distinct"}


def _expand(t: Term, env: dict[str, Term]) -> Term:
    """Inline `let` bindings and check the body stays within the supported grammar."""
    if isinstance(t, str):
        return env.get(t, t)
    if not t:
        raise ModelParseError("empty application in model")
    head = t[0]
    if head == "let":
        if len(t) != 3 or isinstance(t[1], str):
            raise ModelParseError("malformed let")
        inner = dict(env)
        for binding in t[1]:
            name, value = binding
            inner[name] = _expand(value, env)
        return _expand(t[2], inner)
    if not isinstance(head, str) or head not in SUPPORTED_OPS:
        raise ModelParseError(f"unsupported model construct {head!r}")
    return (head, *(_expand(x, env) for x in t[1:]))


def parse_model(text: str) -> dict[str, SigmaEntry]:
    """define-fun entries of a model into (formals, let-free body)."""
    items = parse_sexprs(text)
    if len(items) == 1 and isinstance(items[0], tuple) and (not items[0] or items[0][0] != "define-fun"):
        items = list(items[0])
    if items and items[0] == "model":
        items = items[1:]
    out: dict[str, SigmaEntry] = {}
    for it in items:
        if not (isinstance(it, tuple) and len(it) == 5 and it[0] == "define-fun"):
            raise ModelParseError(f"unexpected model entry {it!r}"[:200])
        _, name, formals, ret, body = it
        if ret != "Bool":
            continue
        names = tuple(f[0] for f in formals)
        out[name] = (names, _expand(body, {}))
    return out


# ------------------------------------------------------------ evaluation


def _num(tok: str) -> Fraction:
    try:
        return Fraction(tok)
    except ValueError as exc:
        raise ModelParseError(f"not a number: {tok}") from exc


def eval_term(t: Term, env: Mapping[str, Fraction | bool]):
    """Exact evaluation of a model body over rational/boolean assignments."""
    if isinstance(t, str):
        if t in env:
            return env[t]
        if t == "true":
            return True
        if t == "false":
            return False
        return _num(t)
    op, args = t[0], [eval_term(x, env) for x in t[1:]]
    match op:
        case "and":
            return all(args)
        case "or":
            return any(args)
        case "not":
            return not args[0]
        case "=>":
            return (not args[0]) or args[1]
        case "=":
            return all(a == args[0] for a in args[1:])
        case "distinct":
            return len(set(args)) == len(args)
        case "<":
            return args[0] < args[1]
        case "<=":
            return args[0] <= args[1]
        case ">":
            return args[0] > args[1]
        case ">=":
            return args[0] >= args[1]
        case "+":
            return sum(args, Fraction(0))
        case "-":
            return -args[0] if len(args) == 1 else args[0] - sum(args[1:], Fraction(0))
        case "*":
            out = Fraction(1)
            for a in args:
                out *= a
            return out
        case "/":
            return args[0] / args[1]
        case "ite":
            return args[1] if args[0] else args[2]
    raise ModelParseError(f"cannot evaluate {op}")
