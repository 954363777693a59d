"""Refinement-type overflow checking and invariant inference for MiniSol."""

from .syntax import parse_contract, pretty_print
from .validate import fold_constants, validate

__all__ = ["parse_contract", "pretty_print", "validate", "fold_constants"]
