"""Exception hierarchy shared across the compiler, runtime and harness."""

from __future__ import annotations


class StanviError(Exception):
    """Base class for all stanvi errors."""


class SourceError(StanviError):
    """An error anchored to a position in a .stan source file."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        if line:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


# --- frontend ---------------------------------------------------------------

class UnterminatedComment(SourceError):
    pass


class IllegalCharacter(SourceError):
    pass


class StanSyntaxError(SourceError):
    """Token sequence does not match the subset grammar."""


class UnsupportedConstruct(SourceError):
    """Valid Stan, but outside the supported subset."""


class TypeMismatch(SourceError):
    pass


class UndefinedIdentifier(SourceError):
    pass


class IllegalAssignment(SourceError):
    """Write to a read-only symbol (data, parameters, loop index)."""


class ShapeMismatch(SourceError):
    pass


# --- model / runtime --------------------------------------------------------

class NonScalarTarget(StanviError):
    pass


class DataSchemaMismatch(StanviError):
    pass


class NaNDetected(StanviError):
    """A NaN surfaced where a finite value (or -inf) was required."""


class OutOfSupport(StanviError):
    """Inverse transform applied to a point outside the constraint's support."""


class InvalidParameter(StanviError):
    """Distribution parameter outside its domain (e.g. sigma <= 0)."""


class UnsupportedDimension(StanviError):
    pass


class HessianNotPD(StanviError):
    """Negative Hessian not positive definite after the jitter ladder."""


class NonConvergence(StanviError):
    pass


# --- harness ----------------------------------------------------------------

class ParseError(StanviError):
    """Malformed input file (JSON data, CSV samples, TOML manifest)."""


class SchemaMismatch(StanviError):
    """Data file does not match the model's data schema."""


class ZeroReferenceStddev(StanviError):
    pass


class MissingParameter(StanviError):
    pass
