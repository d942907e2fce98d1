"""AST node types for the Stan subset.

Source positions are carried on every node but excluded from equality, so
structural comparison (used by the parse/print round-trip tests) ignores
layout.  The ``ty`` slot is filled in by the typechecker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass
class Pos:
    line: int = 0
    column: int = 0


def _pos_field():
    return field(default_factory=Pos, compare=False, repr=False)


# -- types (filled in by the checker) -----------------------------------------

@dataclass(frozen=True)
class Ty:
    """Resolved type: int, real, vector[n], row_vector[n], matrix[m,n], array."""

    base: str                      # int | real | vector | row_vector | matrix | array
    sizes: tuple = ()              # size expressions (possibly symbolic)
    elem: Optional["Ty"] = None    # for arrays

    def __str__(self):
        if self.base == "array":
            return f"{self.elem}[]"
        if self.sizes:
            return f"{self.base}[...]"
        return self.base

    @property
    def is_scalar(self):
        return self.base in ("int", "real")


INT = Ty("int")
REAL = Ty("real")


# -- expressions ---------------------------------------------------------------

@dataclass
class Expr:
    pass


@dataclass
class IntLit(Expr):
    value: int
    pos: Pos = _pos_field()
    ty: Optional[Ty] = field(default=None, compare=False, repr=False)


@dataclass
class RealLit(Expr):
    value: float
    text: str = field(default="", compare=False)  # original spelling, for printing
    pos: Pos = _pos_field()
    ty: Optional[Ty] = field(default=None, compare=False, repr=False)


@dataclass
class Ident(Expr):
    name: str
    pos: Pos = _pos_field()
    ty: Optional[Ty] = field(default=None, compare=False, repr=False)


@dataclass
class Unary(Expr):
    op: str
    operand: Expr
    pos: Pos = _pos_field()
    ty: Optional[Ty] = field(default=None, compare=False, repr=False)


@dataclass
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    pos: Pos = _pos_field()
    ty: Optional[Ty] = field(default=None, compare=False, repr=False)


@dataclass
class Index(Expr):
    base: Expr
    indices: list  # list[Expr], length 1 (vector/array) or 2 (matrix)
    pos: Pos = _pos_field()
    ty: Optional[Ty] = field(default=None, compare=False, repr=False)


@dataclass
class Call(Expr):
    name: str
    args: list  # list[Expr]
    pos: Pos = _pos_field()
    ty: Optional[Ty] = field(default=None, compare=False, repr=False)


# -- declarations ----------------------------------------------------------------

@dataclass
class Constraint:
    """<lower=..., upper=...> annotation; simplex/ordered live in the type."""

    lower: Optional[Expr] = None
    upper: Optional[Expr] = None

    @property
    def is_trivial(self):
        return self.lower is None and self.upper is None


@dataclass
class TypeSpec:
    base: str                      # int | real | vector | row_vector | matrix | simplex | ordered
    constraint: Constraint = field(default_factory=Constraint)
    sizes: list = field(default_factory=list)      # [n] / [m, n] / [k]
    array_dims: list = field(default_factory=list)  # 1-D arrays only


@dataclass
class Decl:
    name: str
    type_spec: TypeSpec
    init: Optional[Expr] = None
    pos: Pos = _pos_field()


# -- statements --------------------------------------------------------------------

@dataclass
class Stmt:
    pass


@dataclass
class DeclStmt(Stmt):
    decl: Decl
    pos: Pos = _pos_field()


@dataclass
class Assign(Stmt):
    target: Expr  # Ident or Index
    value: Expr
    pos: Pos = _pos_field()


@dataclass
class Sample(Stmt):
    value: Expr
    dist: str
    args: list  # list[Expr]
    pos: Pos = _pos_field()


@dataclass
class TargetPlus(Stmt):
    value: Expr
    pos: Pos = _pos_field()


@dataclass
class If(Stmt):
    cond: Expr
    then: Stmt
    orelse: Optional[Stmt] = None
    pos: Pos = _pos_field()


@dataclass
class For(Stmt):
    var: str
    low: Expr
    high: Expr
    body: Stmt
    pos: Pos = _pos_field()


@dataclass
class BlockStmt(Stmt):
    stmts: list = field(default_factory=list)
    pos: Pos = _pos_field()


# -- program -------------------------------------------------------------------------

BLOCK_ORDER = (
    "data",
    "transformed data",
    "parameters",
    "transformed parameters",
    "model",
    "generated quantities",
)


@dataclass
class Program:
    """Ordered optional blocks, each a list of statements/declarations."""

    blocks: dict = field(default_factory=dict)  # name -> list[Stmt]

    def block(self, name):
        return self.blocks.get(name, [])


LValue = Union[Ident, Index]
