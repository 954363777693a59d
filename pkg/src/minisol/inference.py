"""Invariant inference by one CHC query per soft constraint, and the verdict pass.

For every soft (overflow-safety) obligation c, in function declaration order
then evaluation order, the Horn system made of all hard clauses plus the goal
(safety predicates of earlier sites in the same function) ⟹ c is solved. A
satisfying model is conjoined into Σ; unsat or unknown answers skip c. The
final pass substitutes Σ and re-checks every obligation as a plain validity
query, so reported SAFE verdicts never rest on an unchecked model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

from . import ast as A
from .errors import Diagnostic, MiniSolError, ModelParseError, ProtocolError
from .logic import (
    TRUE_T, Encoder, HornClause, SigmaEntry, Term, conj_t, encode_subtyping, horn_clauses,
    pred_signature, render, subst_term, term_symbols, to_horn_script, to_validity_script,
)
from .solver import (
    Invalid, QueryCounter, Sat, SolverConfig, Unknown, Unsat, Valid, check_validity, solve_chc,
)
from .typecheck import ConstraintSet, Mode, Obligation, generate_constraints

SCHEMA_VERSION = 1


class Status(Enum):
    SAFE = "SAFE"
    NEEDS_CHECK = "NEEDS_CHECK"


class Reason(Enum):
    INFERENCE = "discharged-in-inference"
    FINALIZE = "discharged-in-finalize"
    UNKNOWN = "solver-unknown"
    INVALID = "invalid"


@dataclass(frozen=True)
class Options:
    """Pipeline switches; all off is the default Auto configuration."""

    no_soft: bool = False
    no_nested: bool = False
    no_infer: bool = False
    uniform_assumptions: bool = False
    accumulate_sigma: bool = False
    chc_arrays: bool = False

    @property
    def nested(self) -> bool:
        return not self.no_nested


@dataclass(frozen=True)
class Verdict:
    function: str
    line: int
    column: int
    op: str
    status: Status
    reason: Reason

    @property
    def safe(self) -> bool:
        return self.status is Status.SAFE

    def to_json(self) -> dict:
        return {"function": self.function, "line": self.line, "column": self.column,
                "op": self.op, "status": self.status.value, "reason": self.reason.value}


@dataclass
class Sigma:
    """Accumulated interpretation of each unknown predicate (conjunction of model bodies)."""

    entries: dict[str, SigmaEntry] = field(default_factory=dict)

    @classmethod
    def top(cls, signatures: dict[str, tuple[str, ...]]) -> "Sigma":
        return cls({p: (tuple(f"x!{i}" for i in range(len(s))), TRUE_T) for p, s in signatures.items()})

    def conjoin(self, model: dict[str, SigmaEntry]) -> None:
        for p, (formals, body) in model.items():
            if p not in self.entries:
                self.entries[p] = (formals, body)
                continue
            mine, old = self.entries[p]
            renamed = subst_term(body, dict(zip(formals, mine)))
            self.entries[p] = (mine, conj_t([old, renamed]))

    def render(self) -> dict[str, str]:
        return {p: render(body) for p, (_, body) in sorted(self.entries.items())}


@dataclass
class QueryLog:
    site: tuple
    script: str
    outcome: str


@dataclass
class InferenceResult:
    sigma: Sigma
    outcomes: dict[tuple, str]  # soft site -> sat | unsat | unknown
    log: list[QueryLog] = field(default_factory=list)


def signatures(cs: ConstraintSet, opts: Options) -> dict[str, tuple[str, ...]]:
    structs = cs.contract.struct_table()
    return {p.name: pred_signature(p.sorts, structs, opts.nested, opts.chc_arrays) for p in cs.preds.values()}


def hard_clauses(cs: ConstraintSet, opts: Options) -> list[HornClause]:
    """Horn clauses of hard obligations that mention unknowns (predicate-free hards are left out)."""
    structs = cs.contract.struct_table()
    out = []
    for ob in cs.hard:
        if ob.has_unknowns():
            out += horn_clauses(ob, structs, opts.nested, prior=opts.uniform_assumptions,
                                chc_arrays=opts.chc_arrays, origin=_origin(ob))
    return out


def _origin(ob: Obligation) -> str:
    fn, line, col, label = ob.site
    return f"{ob.kind} {label} {fn}:{line}:{col}"


def _sigma_clauses(sigma: Sigma, sigs: dict[str, tuple[str, ...]]) -> list[HornClause]:
    """p(x) ⟹ Σ(p)(x): restricts later models to strengthen what is already known."""
    out = []
    for p, (formals, body) in sigma.entries.items():
        if body == TRUE_T:
            continue
        names = tuple(f"|s!{i}|" for i in range(len(formals)))
        app = (p, *names) if names else p
        out.append(HornClause(tuple(zip(names, sigs[p])), (app,), subst_term(body, dict(zip(formals, names))),
                              "accumulated interpretation"))
    return out


def _solve(script: str, sigs, cfg: SolverConfig, counter: QueryCounter | None):
    try:
        return solve_chc(script, cfg, sigs, counter)
    except (ModelParseError, ProtocolError):
        return Unknown("model-parse")


def infer_types(cs: ConstraintSet, cfg: SolverConfig, opts: Options = Options(),
                counter: QueryCounter | None = None) -> InferenceResult:
    """Strengthen Σ one soft constraint at a time."""
    structs = cs.contract.struct_table()
    sigs = signatures(cs, opts)
    sigma = Sigma.top(sigs)
    hards = hard_clauses(cs, opts)
    result = InferenceResult(sigma, {})
    for c in cs.ordered_soft():
        goal = horn_clauses(c, structs, opts.nested, prior=True, chc_arrays=opts.chc_arrays, origin=_origin(c))
        extra = _sigma_clauses(sigma, sigs) if opts.accumulate_sigma else []
        script = to_horn_script(hards + extra + goal, sigs)
        r = _solve(script, sigs, cfg, counter)
        match r:
            case Sat(model):
                sigma.conjoin(model)
                outcome = "sat"
            case Unsat():
                outcome = "unsat"
            case _:
                outcome = "unknown"
        result.outcomes[c.site] = outcome
        result.log.append(QueryLog(c.site, script, outcome))
    canonicalize(sigma, cs, opts)
    return result


def _flat_atoms(t: Term) -> list[Term]:
    if isinstance(t, tuple) and t and t[0] == "and":
        return [a for x in t[1:] for a in _flat_atoms(x)]
    return [] if t == TRUE_T else [t]


def canonicalize(sigma: Sigma, cs: ConstraintSet, opts: Options) -> None:
    """Attribute each conjunct of the state invariants to one state variable.

    Every fetch assumes all state-variable predicates together and every
    commit checks all of them, so only their conjunction matters. Each
    conjunct is moved to the predicate of the last state variable whose
    slots it mentions, which makes the split independent of solver choices.
    """
    structs = cs.contract.struct_table()
    svs = cs.contract.state_vars
    preds = [f"I_{k}" for k in range(1, len(svs) + 1)]
    if not preds or not all(p in sigma.entries and p in cs.preds for p in preds):
        return
    owner_of: dict[int, int] = {}
    pos = 0
    for k, sv in enumerate(svs):
        for _ in pred_signature((sv.type.base,), structs, opts.nested, opts.chc_arrays):
            owner_of[pos] = k
            pos += 1
    formals = sigma.entries[preds[0]][0]
    index = {f: i for i, f in enumerate(formals)}
    buckets: list[list[Term]] = [[] for _ in svs]
    for p in preds:
        mine, body = sigma.entries[p]
        if mine != formals:
            body = subst_term(body, dict(zip(mine, formals)))
        for atom in _flat_atoms(body):
            used = [owner_of[index[s]] for s in term_symbols(atom) if s in index]
            k = max(used) if used else preds.index(p)
            if atom not in buckets[k]:
                buckets[k].append(atom)
    for k, p in enumerate(preds):
        sigma.entries[p] = (formals, conj_t(buckets[k]))


def no_soft_query(cs: ConstraintSet, cfg: SolverConfig, opts: Options,
                  counter: QueryCounter | None = None) -> tuple[InferenceResult, str]:
    """One system with every safety constraint as a hard clause; outcome applies to all sites."""
    structs = cs.contract.struct_table()
    sigs = signatures(cs, opts)
    sigma = Sigma.top(sigs)
    clauses = hard_clauses(cs, opts)
    for c in cs.ordered_soft():
        clauses += horn_clauses(c, structs, opts.nested, prior=False, chc_arrays=opts.chc_arrays, origin=_origin(c))
    script = to_horn_script(clauses, sigs)
    r = _solve(script, sigs, cfg, counter)
    outcome = {Sat: "sat", Unsat: "unsat"}.get(type(r), "unknown")
    if isinstance(r, Sat):
        sigma.conjoin(r.model)
        canonicalize(sigma, cs, opts)
    res = InferenceResult(sigma, {c.site: outcome for c in cs.soft}, [QueryLog(("*",), script, outcome)])
    return res, outcome


# ------------------------------------------------------------ finalize


def relied_on(ob: Obligation, hards: list[Obligation]) -> list[Obligation]:
    """Hard obligations whose validity the discharge of soft `ob` depends on.

    Invariants assumed at fetch rest on every commit; callee contracts on
    returns and call arguments; local types on the non-assert obligations of
    the same function.
    """
    out = []
    for h in hards:
        if h.label in ("commit", "return", "call-arg"):
            out.append(h)
        elif h.fn == ob.fn and h.label != "assert":
            out.append(h)
    return out


def obligation_script(ob: Obligation, structs, nested: bool, sigma: Sigma | None,
                      chc_arrays: bool = False) -> tuple[str | None, Term]:
    """Validity script for `ob` under Σ, or None when the consequent is trivially true."""
    enc = Encoder(structs, nested, sigma=sigma.entries if sigma else {}, chc_arrays=chc_arrays)
    f = encode_subtyping(enc, ob, prior=True)
    if f[2] == TRUE_T:
        return None, f
    return to_validity_script(f, enc), f


def check_obligation(ob: Obligation, structs, nested: bool, sigma: Sigma | None, cfg: SolverConfig,
                     counter: QueryCounter | None = None, chc_arrays: bool = False):
    script, _ = obligation_script(ob, structs, nested, sigma, chc_arrays)
    if script is None:
        return Valid()
    try:
        return check_validity(script, cfg, counter)
    except (ProtocolError, MiniSolError):
        return Unknown("io-error")


def _reason(r) -> Reason:
    return Reason.INVALID if isinstance(r, Invalid) else Reason.UNKNOWN


def finalize(cs: ConstraintSet, sigma: Sigma | None, cfg: SolverConfig, opts: Options = Options(),
             inference: InferenceResult | None = None,
             counter: QueryCounter | None = None) -> tuple[list[Verdict], list[Diagnostic]]:
    """Verdict per arithmetic site and diagnostics for failing hard obligations."""
    structs = cs.contract.struct_table()
    hard_results = {}
    failures = []
    for h in cs.hard:
        r = check_obligation(h, structs, opts.nested, sigma, cfg, counter, opts.chc_arrays)
        hard_results[id(h)] = r
        if not isinstance(r, Valid):
            what = "does not hold" if isinstance(r, Invalid) else "could not be established"
            target = f" for {h.target}" if h.target else ""
            failures.append(Diagnostic(
                h.loc, "InvariantViolation" if isinstance(r, Invalid) else "InvariantUnknown",
                f"{h.label} obligation{target} in {h.fn} {what}"))

    verdicts = []
    for s in cs.ordered_soft():
        fn, line, col, op = s.site
        pre = inference.outcomes.get(s.site) if inference is not None else None
        if pre is not None and pre != "sat":
            verdicts.append(Verdict(fn, line, col, op, Status.NEEDS_CHECK,
                                    Reason.INVALID if pre == "unsat" else Reason.UNKNOWN))
            continue
        r = check_obligation(s, structs, opts.nested, sigma, cfg, counter, opts.chc_arrays)
        if not isinstance(r, Valid):
            verdicts.append(Verdict(fn, line, col, op, Status.NEEDS_CHECK, _reason(r)))
            continue
        bad = [hard_results[id(h)] for h in relied_on(s, cs.hard) if not isinstance(hard_results[id(h)], Valid)]
        if bad:
            verdicts.append(Verdict(fn, line, col, op, Status.NEEDS_CHECK, _reason(bad[0])))
            continue
        reason = Reason.INFERENCE if inference is not None else Reason.FINALIZE
        verdicts.append(Verdict(fn, line, col, op, Status.SAFE, reason))
    return verdicts, failures


# ------------------------------------------------------------ pipeline


@dataclass
class Report:
    contract: str
    mode: str
    verdicts: list[Verdict]
    hard_failures: list[Diagnostic]
    solver_queries: int
    wall_time_ms: int
    sigma: dict[str, str] = field(default_factory=dict)
    sigma_entries: dict[str, SigmaEntry] = field(default_factory=dict, repr=False)

    @property
    def soft_total(self) -> int:
        return len(self.verdicts)

    @property
    def safe_count(self) -> int:
        return sum(1 for v in self.verdicts if v.safe)

    def to_json(self, with_time: bool = True) -> dict:
        stats = {"softTotal": self.soft_total, "safeCount": self.safe_count, "solverQueries": self.solver_queries}
        if with_time:
            stats["wallTimeMs"] = self.wall_time_ms
        return {
            "schema": SCHEMA_VERSION,
            "contractName": self.contract,
            "mode": self.mode,
            "verdicts": [v.to_json() for v in self.verdicts],
            "hardFailures": [d.to_json() for d in self.hard_failures],
            "invariants": self.sigma,
            "stats": stats,
        }

    def to_text(self) -> str:
        lines = [f"contract {self.contract} ({self.mode})"]
        for v in self.verdicts:
            lines.append(f"  {v.function}:{v.line}:{v.column}  {v.op}  {v.status.value:<11}  {v.reason.value}")
        for name, body in self.sigma.items():
            lines.append(f"  invariant {name} := {body}")
        for d in self.hard_failures:
            lines.append("  " + d.render())
        lines.append(f"{self.safe_count}/{self.soft_total} arithmetic sites SAFE, "
                     f"{len(self.hard_failures)} hard failures, {self.solver_queries} solver queries, "
                     f"{self.wall_time_ms} ms")
        return "\n".join(lines)


def run(contract: A.Contract, mode: Mode, cfg: SolverConfig, opts: Options = Options()) -> Report:
    """Constraint generation, inference (Infer mode) and the verdict pass."""
    start = time.monotonic()
    counter = QueryCounter()
    cs = generate_constraints(contract, mode, opts.nested)
    inference = None
    sigma = None
    if mode is Mode.INFER and not opts.no_infer:
        if opts.no_soft:
            inference, _ = no_soft_query(cs, cfg, opts, counter)
        else:
            inference = infer_types(cs, cfg, opts, counter)
        sigma = inference.sigma
    elif opts.no_soft:
        inference, _ = no_soft_query(cs, cfg, opts, counter)
    verdicts, failures = finalize(cs, sigma, cfg, opts, inference, counter)
    label = mode.value + "".join(f"+{k}" for k in ("no_soft", "no_nested", "no_infer") if getattr(opts, k))
    elapsed = int((time.monotonic() - start) * 1000)
    return Report(contract.name, label, verdicts, failures, counter.count, elapsed,
                  sigma.render() if sigma else {}, dict(sigma.entries) if sigma else {})


def check_sigma_implies(sigma: Sigma, pred: str, sorts: tuple[str, ...], goal, cfg: SolverConfig):
    """Is Σ(pred)(x) ⟹ goal(x) valid? `goal` maps the slot symbols to a term."""
    formals, body = sigma.entries[pred]
    names = [f"|x{i}|" for i in range(len(sorts))]
    enc = Encoder({})
    for n, s in zip(names, sorts):
        enc.consts[n] = s
    f = ("=>", subst_term(body, dict(zip(formals, names))), goal(names))
    return check_validity(to_validity_script(f, enc), cfg)
