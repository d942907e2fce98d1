"""Frontend: lexing, parsing, printing and type-checking of the Stan subset."""

from .lexer import Token, tokenize
from .nodes import Program
from .parser import parse, parse_source
from .printer import print_program
from .typecheck import Symbol, TypedProgram, check

__all__ = [
    "Token", "tokenize", "Program", "parse", "parse_source", "print_program",
    "TypedProgram", "Symbol", "check",
]


def check_source(source: str) -> TypedProgram:
    """Tokenize, parse and type-check in one step."""
    return check(parse_source(source))
