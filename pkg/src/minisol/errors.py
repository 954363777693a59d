"""Error and diagnostic types shared across the pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .ast import SourceLoc


@dataclass(frozen=True)
class Diagnostic:
    loc: SourceLoc | None
    code: str
    message: str
    severity: str = "error"

    def render(self) -> str:
        where = str(self.loc) if self.loc else "<unknown>:0:0"
        return f"{where}: {self.severity}: {self.message}"

    def to_json(self) -> dict:
        loc = None
        if self.loc:
            loc = {"file": self.loc.file, "line": self.loc.line, "column": self.loc.col}
        return {"loc": loc, "code": self.code, "message": self.message}


def render_diagnostics(diags: list[Diagnostic], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps([d.to_json() for d in diags], indent=2)
    return "\n".join(d.render() for d in diags)


class MiniSolError(Exception):
    """Base class; every subclass carries a stable diagnostic code."""

    code = "Error"

    def __init__(self, message: str, loc: SourceLoc | None = None):
        super().__init__(message)
        self.message = message
        self.loc = loc

    def diagnostic(self) -> Diagnostic:
        return Diagnostic(self.loc, self.code, self.message)

    def __str__(self) -> str:
        return self.diagnostic().render() if self.loc else self.message


class ParseError(MiniSolError):
    code = "SyntaxError"

    def __init__(self, message: str, loc: SourceLoc | None = None, expected=()):
        super().__init__(message, loc)
        self.expected = tuple(expected)


class SortError(MiniSolError):
    code = "SortError"


class SortMismatch(MiniSolError):
    code = "SortMismatch"


class ValidationError(MiniSolError):
    """Raised when validate() reports diagnostics and the caller wants an exception."""

    code = "ValidationError"

    def __init__(self, diagnostics: list[Diagnostic]):
        first = diagnostics[0]
        super().__init__(first.message, first.loc)
        self.diagnostics = diagnostics


class ConstantOverflow(MiniSolError):
    code = "ConstantOverflow"


class UnboundVariable(MiniSolError):
    code = "UnboundVariable"


class LockViolation(MiniSolError):
    code = "LockViolation"


class JoinLockMismatch(MiniSolError):
    code = "JoinLockMismatch"


class UnknownPredicatePresent(MiniSolError):
    code = "UnknownPredicatePresent"


class NonHornShape(MiniSolError):
    code = "NonHornShape"


class EncodingError(MiniSolError):
    code = "EncodingError"


class SolverNotFound(MiniSolError):
    code = "SolverNotFound"


class ProtocolError(MiniSolError):
    code = "ProtocolError"


class ModelParseError(MiniSolError):
    code = "ModelParseError"


class DomainError(MiniSolError):
    code = "DomainError"
