"""Concrete syntax for MiniSol: tokenizer, recursive-descent parser, printer.

The surface form mirrors the IR listings used for smart-contract examples::

    contract Token {
        owner : addr;
        bals : map(addr => uint) sat { sum(v) <= tot };
        tot : uint;
        fun mint(amt : uint) {
            fetch owner as owner1, bals as bals1, tot as tot1;
            require(msg.sender == owner1);
            let tot2 : uint = tot1 + amt;
            ...
            commit owner1 to owner, bals2 to bals, tot2 to tot;
        }
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import ast as A
from .errors import ParseError

KEYWORDS = {
    "contract", "struct", "fun", "pure", "constructor", "let", "fetch", "as",
    "commit", "to", "require", "assume", "assert", "if", "else", "join", "while",
    "call", "phi", "return", "skip", "havoc", "map", "true", "false", "sat",
    "uint", "addr", "bool", "unit", "sum", "flatten", "fld", "maxint",
    "zero_map", "msg",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<num>[0-9]+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><-|->|=>|==|!=|<=|>=|&&|\|\||[-+*/<>=!(){}\[\];:,.])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "kw", "op", "eof"
    text: str
    loc: A.SourceLoc


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        loc = A.SourceLoc(filename, line, pos - line_start + 1)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", loc)
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "name" and lexeme in KEYWORDS:
            kind = "kw"
        if kind in ("num", "name", "kw", "op"):
            tokens.append(Token(kind, lexeme, loc))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            line_start = pos + lexeme.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "<eof>", A.SourceLoc(filename, line, pos - line_start + 1)))
    return tokens


# binary operator precedence, loosest first
_PRECEDENCE = [("||",), ("&&",), ("==", "!="), ("<", "<=", ">", ">="), ("+", "-"), ("*", "/")]
_LEVEL = {op: i for i, ops in enumerate(_PRECEDENCE) for op in ops}


class Parser:
    def __init__(self, text: str, filename: str = "<input>"):
        self.tokens = tokenize(text, filename)
        self.i = 0
        self.in_qual = False

    # -- token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text in texts

    def error(self, *expected: str):
        t = self.tok
        exp = ", ".join(repr(e) for e in expected)
        raise ParseError(f"expected {exp} but found {t.text!r}", t.loc, expected)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(text)
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def ident(self) -> tuple[str, A.SourceLoc]:
        t = self.tok
        if t.kind != "name":
            self.error("identifier")
        self.i += 1
        return t.text, t.loc

    # -- contract level

    def contract(self) -> A.Contract:
        start = self.expect("contract")
        name, _ = self.ident()
        self.expect("{")
        structs, svars, funs = [], [], []
        ctor = None
        while not self.at("}"):
            if self.at("struct"):
                structs.append(self.struct_decl())
            elif self.at("constructor"):
                if ctor is not None:
                    raise ParseError("duplicate constructor", self.tok.loc)
                ctor = self.fun_decl(is_ctor=True)
            elif self.at("fun", "pure"):
                funs.append(self.fun_decl())
            elif self.tok.kind == "name":
                vname, loc = self.ident()
                self.expect(":")
                typ = self.reftype()
                self.expect(";")
                svars.append(A.StateVar(vname, typ, loc=loc))
            else:
                self.error("struct", "constructor", "fun", "pure", "identifier", "}")
        self.expect("}")
        if self.tok.kind != "eof":
            self.error("<eof>")
        return A.Contract(name, tuple(structs), tuple(svars), ctor, tuple(funs), loc=start.loc)

    def struct_decl(self) -> A.StructDecl:
        start = self.expect("struct")
        name, _ = self.ident()
        self.expect("{")
        fields = []
        while not self.at("}"):
            fname, _ = self.ident()
            self.expect(":")
            fields.append((fname, self.base_type()))
            self.expect(";")
        self.expect("}")
        return A.StructDecl(name, tuple(fields), loc=start.loc)

    def fun_decl(self, is_ctor: bool = False) -> A.FunDecl:
        pure = False
        if is_ctor:
            start = self.expect("constructor")
            name = A.CTOR
        else:
            start = self.tok
            pure = self.accept("pure") is not None
            self.expect("fun")
            name, _ = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                pname, ploc = self.ident()
                self.expect(":")
                params.append(A.Param(pname, self.reftype(), loc=ploc))
                if not self.accept(","):
                    break
        self.expect(")")
        ret = A.RefType(A.UNIT)
        if not is_ctor and self.accept(":"):
            ret = self.reftype()
        body, result = self.block(allow_return=True)
        return A.FunDecl(name, tuple(params), ret, body, result, pure, loc=start.loc)

    # -- types

    def base_type(self) -> A.BaseType:
        t = self.tok
        if self.accept("uint") or self.accept("addr"):
            return A.UINT
        if self.accept("bool"):
            return A.BOOL
        if self.accept("unit"):
            return A.UNIT
        if self.accept("map"):
            self.expect("(")
            key = self.base_type()
            if key != A.UINT:
                raise ParseError("map keys must be uint or addr", t.loc, ("uint", "addr"))
            self.expect("=>")
            val = self.base_type()
            self.expect(")")
            return A.MapType(val)
        if t.kind == "name":
            self.i += 1
            return A.StructType(t.text)
        self.error("uint", "addr", "bool", "unit", "map", "struct name")

    def reftype(self) -> A.RefType:
        base = self.base_type()
        if self.accept("sat"):
            self.expect("{")
            saved, self.in_qual = self.in_qual, True
            qual = self.expr()
            self.in_qual = saved
            self.expect("}")
            return A.RefType(base, qual)
        return A.RefType(base)

    # -- statements

    def block(self, allow_return: bool = False):
        self.expect("{")
        stmts = []
        result = A.UnitLit()
        while not self.at("}"):
            if allow_return and self.at("return"):
                rt = self.expect("return")
                result = self.expr()
                if isinstance(result, A.UnitLit):
                    result = A.UnitLit(loc=rt.loc)
                self.expect(";")
                if not self.at("}"):
                    self.error("}")
                break
            stmts.append(self.stmt())
        self.expect("}")
        body = A.seq(*stmts)
        return (body, result) if allow_return else body

    def stmt(self) -> A.Stmt:
        t = self.tok
        loc = t.loc
        if self.accept("let"):
            name, _ = self.ident()
            self.expect(":")
            typ = self.reftype()
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return A.Let(name, typ, value, loc=loc)
        if self.accept("skip"):
            self.expect(";")
            return A.Skip(loc=loc)
        if self.accept("require") or self.accept("assume"):
            cond = self.paren_expr()
            self.expect(";")
            return A.Assume(cond, loc=loc)
        if self.accept("assert"):
            cond = self.paren_expr()
            self.expect(";")
            return A.Assert(cond, loc=loc)
        if self.accept("fetch"):
            bindings = []
            while True:
                sv, _ = self.ident()
                self.expect("as")
                local, _ = self.ident()
                bindings.append((sv, local))
                if not self.accept(","):
                    break
            self.expect(";")
            return A.Fetch(tuple(bindings), loc=loc)
        if self.accept("commit"):
            writes = []
            while True:
                e = self.expr()
                self.expect("to")
                sv, _ = self.ident()
                writes.append((e, sv))
                if not self.accept(","):
                    break
            self.expect(";")
            return A.Commit(tuple(writes), loc=loc)
        if self.accept("if"):
            cond = self.paren_expr()
            then = self.block()
            orelse = A.Skip()
            if self.accept("else"):
                orelse = self.block()
            join = self.join() if self.at("join") else ()
            return A.If(cond, then, orelse, join, loc=loc)
        if self.accept("while"):
            join = self.join()
            cond = self.paren_expr()
            body = self.block()
            return A.While(join, cond, body, loc=loc)
        if self.accept("call"):
            target, _ = self.ident()
            self.expect(":")
            typ = self.reftype()
            self.expect("=")
            fname, _ = self.ident()
            self.expect("(")
            args = []
            if not self.at(")"):
                while True:
                    args.append(self.expr())
                    if not self.accept(","):
                        break
            self.expect(")")
            self.expect(";")
            return A.Call(target, typ, fname, tuple(args), loc=loc)
        self.error("let", "fetch", "commit", "require", "assert", "if", "while", "call", "skip", "return")

    def join(self) -> tuple[A.Phi, ...]:
        self.expect("join")
        self.expect("{")
        phis = []
        while not self.at("}"):
            name, loc = self.ident()
            self.expect(":")
            typ = self.reftype()
            self.expect("=")
            self.expect("phi")
            self.expect("(")
            left, _ = self.ident()
            self.expect(",")
            right, _ = self.ident()
            self.expect(")")
            phis.append(A.Phi(name, typ, left, right, loc=loc))
            if not self.accept(","):
                break
        self.expect("}")
        return tuple(phis)

    # -- expressions

    def paren_expr(self) -> A.Expr:
        self.expect("(")
        e = self.expr()
        self.expect(")")
        return e

    def expr(self, level: int = 0) -> A.Expr:
        if level == len(_PRECEDENCE):
            return self.unary()
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in _PRECEDENCE[level]:
            op = self.tok
            self.i += 1
            right = self.expr(level + 1)
            left = A.BinOp(op.text, left, right, loc=op.loc)
        return left

    def unary(self) -> A.Expr:
        t = self.tok
        if self.accept("!"):
            return A.Not(self.unary(), loc=t.loc)
        return self.postfix(self.primary())

    def postfix(self, e: A.Expr) -> A.Expr:
        while self.at("["):
            lb = self.expect("[")
            if self.accept("."):
                fname, _ = self.ident()
                if self.accept("<-"):
                    val = self.expr()
                    self.expect("]")
                    e = A.FieldUpdate(e, fname, val, loc=lb.loc)
                else:
                    self.expect("]")
                    e = A.Field(e, fname, loc=lb.loc)
                continue
            key = self.expr()
            if self.accept("<-"):
                val = self.expr()
                self.expect("]")
                e = A.Update(e, key, val, loc=lb.loc)
            else:
                self.expect("]")
                e = A.Index(e, key, loc=lb.loc)
        return e

    def primary(self) -> A.Expr:
        t = self.tok
        loc = t.loc
        if t.kind == "num":
            self.i += 1
            return A.Nat(int(t.text), loc=loc)
        if self.accept("true"):
            return A.BoolLit(True, loc=loc)
        if self.accept("false"):
            return A.BoolLit(False, loc=loc)
        if self.at("(") and self.peek().text == ")" and self.peek().kind == "op":
            self.i += 2
            return A.UnitLit(loc=loc)
        if self.at("("):
            return self.paren_expr()
        if self.accept("msg"):
            self.expect(".")
            name, _ = self.ident()
            if name != "sender":
                raise ParseError("only msg.sender is supported", loc, ("sender",))
            return A.Var(A.SENDER, loc=loc)
        if self.accept("havoc"):
            return A.Havoc(self.base_type(), loc=loc)
        if self.accept("maxint"):
            return A.MaxInt(loc=loc)
        if self.accept("sum"):
            return A.Sum(self.paren_expr(), loc=loc)
        if self.accept("flatten"):
            return A.Flatten(self.paren_expr(), loc=loc)
        if self.accept("fld"):
            self.expect(".")
            fname, _ = self.ident()
            return A.Fld(fname, self.paren_expr(), loc=loc)
        if self.accept("zero_map"):
            self.expect("[")
            key = self.base_type()
            if key != A.UINT:
                raise ParseError("map keys must be uint or addr", loc, ("uint", "addr"))
            self.expect(",")
            val = self.base_type()
            self.expect("]")
            return A.MapLit(val, (), loc=loc)
        if self.accept("map"):
            self.expect("(")
            val = self.base_type()
            self.expect(")")
            self.expect("{")
            entries = []
            if not self.at("}"):
                while True:
                    kt = self.tok
                    if kt.kind != "num":
                        self.error("numeric key")
                    self.i += 1
                    self.expect("->")
                    entries.append((int(kt.text), self.expr()))
                    if not self.accept(","):
                        break
            self.expect("}")
            return A.MapLit(val, tuple(entries), loc=loc)
        if self.accept("struct"):
            sname, _ = self.ident()
            self.expect("{")
            fields = []
            if not self.at("}"):
                while True:
                    fname, _ = self.ident()
                    self.expect(":")
                    fields.append((fname, self.expr()))
                    if not self.accept(","):
                        break
            self.expect("}")
            return A.StructLit(sname, tuple(fields), loc=loc)
        if t.kind == "name":
            self.i += 1
            if self.in_qual and t.text == "v":
                return A.Nu(loc=loc)
            return A.Var(t.text, loc=loc)
        self.error("expression")


def parse_contract(text: str, filename: str = "<input>") -> A.Contract:
    """Parse MiniSol source text; raises ParseError with position and expected tokens."""
    return Parser(text, filename).contract()


def parse_expr(text: str, qualifier: bool = True) -> A.Expr:
    """Parse a standalone expression (qualifier syntax by default, so `v` is the value variable)."""
    p = Parser(text)
    p.in_qual = qualifier
    e = p.expr()
    if p.tok.kind != "eof":
        p.error("<eof>")
    return e


def parse_type(text: str) -> A.RefType:
    p = Parser(text)
    t = p.reftype()
    if p.tok.kind != "eof":
        p.error("<eof>")
    return t


# ------------------------------------------------------------------ printer


def format_base(t: A.BaseType) -> str:
    match t:
        case A.UIntType():
            return "uint"
        case A.BoolType():
            return "bool"
        case A.UnitType():
            return "unit"
        case A.MapType(v):
            return f"map(uint => {format_base(v)})"
        case A.StructType(name):
            return name
    raise TypeError(t)


def format_type(t: A.RefType) -> str:
    base = format_base(t.base)
    if t.qual is None:
        return base
    return f"{base} sat {{ {format_expr(t.qual)} }}"


def _binop_child(e: A.Expr, level: int, right: bool) -> str:
    text = format_expr(e)
    if isinstance(e, A.BinOp):
        child = _LEVEL[e.op]
        if child < level or (right and child == level):
            return f"({text})"
    return text


def format_expr(e: A.Expr) -> str:
    match e:
        case A.Nat(n):
            return str(n)
        case A.BoolLit(b):
            return "true" if b else "false"
        case A.UnitLit():
            return "()"
        case A.Var(name):
            return "msg.sender" if name == A.SENDER else name
        case A.Nu():
            return "v"
        case A.MaxInt():
            return "maxint"
        case A.Hole():
            return "[]"
        case A.BinOp(op, l, r):
            level = _LEVEL[op]
            return f"{_binop_child(l, level, False)} {op} {_binop_child(r, level, True)}"
        case A.Not(a):
            inner = format_expr(a)
            if isinstance(a, A.BinOp):
                inner = f"({inner})"
            return f"!{inner}"
        case A.MapLit(t, entries):
            if not entries:
                return f"zero_map[uint, {format_base(t)}]"
            body = ", ".join(f"{k} -> {format_expr(v)}" for k, v in sorted(entries, key=lambda kv: kv[0]))
            return f"map({format_base(t)}){{{body}}}"
        case A.StructLit(name, fields):
            body = ", ".join(f"{f}: {format_expr(v)}" for f, v in fields)
            return f"struct {name}{{{body}}}"
        case A.Index(b, k):
            return f"{_postfix_base(b)}[{format_expr(k)}]"
        case A.Update(b, k, v):
            return f"{_postfix_base(b)}[{format_expr(k)} <- {format_expr(v)}]"
        case A.Field(b, name):
            return f"{_postfix_base(b)}[.{name}]"
        case A.FieldUpdate(b, name, v):
            return f"{_postfix_base(b)}[.{name} <- {format_expr(v)}]"
        case A.Havoc(t):
            return f"havoc {format_base(t)}"
        case A.Sum(a):
            return f"sum({format_expr(a)})"
        case A.Flatten(a):
            return f"flatten({format_expr(a)})"
        case A.Fld(name, a):
            return f"fld.{name}({format_expr(a)})"
        case A.PredApp(name, args):
            return f"{name}({', '.join(format_expr(a) for a in args)})"
    raise TypeError(e)


def _postfix_base(e: A.Expr) -> str:
    text = format_expr(e)
    if isinstance(e, (A.BinOp, A.Not, A.Havoc)):
        return f"({text})"
    return text


def _format_stmts(s: A.Stmt, indent: int) -> list[str]:
    pad = "    " * indent
    out: list[str] = []
    for st in A.flatten_seq(s):
        match st:
            case A.Skip():
                if not isinstance(s, A.Skip):
                    out.append(f"{pad}skip;")
            case A.Let(name, typ, value):
                out.append(f"{pad}let {name} : {format_type(typ)} = {format_expr(value)};")
            case A.Assume(cond):
                out.append(f"{pad}require({format_expr(cond)});")
            case A.Assert(cond):
                out.append(f"{pad}assert({format_expr(cond)});")
            case A.Fetch(bindings):
                out.append(f"{pad}fetch {', '.join(f'{sv} as {x}' for sv, x in bindings)};")
            case A.Commit(writes):
                out.append(f"{pad}commit {', '.join(f'{format_expr(e)} to {sv}' for e, sv in writes)};")
            case A.Call(target, typ, func, args):
                argtext = ", ".join(format_expr(a) for a in args)
                out.append(f"{pad}call {target} : {format_type(typ)} = {func}({argtext});")
            case A.If(cond, then, orelse, join):
                out.append(f"{pad}if ({format_expr(cond)}) {{")
                out += _format_stmts(then, indent + 1)
                out.append(f"{pad}}} else {{")
                out += _format_stmts(orelse, indent + 1)
                out.append(f"{pad}}}" + (f" join {_format_join(join)}" if join else ""))
            case A.While(join, cond, body):
                out.append(f"{pad}while join {_format_join(join)} ({format_expr(cond)}) {{")
                out += _format_stmts(body, indent + 1)
                out.append(f"{pad}}}")
            case _:
                raise TypeError(st)
    return out


def _format_join(join: tuple[A.Phi, ...]) -> str:
    parts = [f"{p.name} : {format_type(p.type)} = phi({p.left}, {p.right})" for p in join]
    return "{ " + ", ".join(parts) + " }" if parts else "{ }"


def _format_fun(f: A.FunDecl, indent: int = 1) -> list[str]:
    pad = "    " * indent
    params = ", ".join(f"{p.name} : {format_type(p.type)}" for p in f.params)
    if f.name == A.CTOR:
        head = f"constructor({params})"
    else:
        head = ("pure " if f.pure else "") + f"fun {f.name}({params})"
        if f.ret != A.RefType(A.UNIT):
            head += f" : {format_type(f.ret)}"
    out = [f"{pad}{head} {{"]
    out += _format_stmts(f.body, indent + 1)
    if not isinstance(f.result, A.UnitLit):
        out.append(f"{pad}    return {format_expr(f.result)};")
    out.append(f"{pad}}}")
    return out


def pretty_print(c: A.Contract) -> str:
    """Canonical concrete syntax; parse_contract(pretty_print(c)) == c."""
    out = [f"contract {c.name} {{"]
    for s in c.structs:
        out.append(f"    struct {s.name} {{")
        for fname, ftype in s.fields:
            out.append(f"        {fname} : {format_base(ftype)};")
        out.append("    }")
    for sv in c.state_vars:
        out.append(f"    {sv.name} : {format_type(sv.type)};")
    if c.ctor is not None:
        out += _format_fun(c.ctor)
    for f in c.functions:
        out += _format_fun(f)
    out.append("}")
    return "\n".join(out) + "\n"
