"""Semantic analysis: scoping, typing, and block legality of the Stan subset.

``check`` annotates every expression node with its resolved type (``.ty``)
and returns a :class:`TypedProgram` carrying the per-block symbol tables the
compiler consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..distributions import ARITY, REGISTRY
from ..errors import (
    IllegalAssignment, ShapeMismatch, TypeMismatch, UndefinedIdentifier,
    UnsupportedConstruct,
)
from .nodes import (
    Assign, Binary, BlockStmt, Call, Constraint, Decl, DeclStmt, For, INT,
    Ident, If, Index, IntLit, Program, REAL, RealLit, Sample, TargetPlus, Ty,
    Unary,
)

ELEMENTWISE_FNS = ("exp", "log", "log1p", "sqrt", "square", "abs",
                   "inv_logit", "logit")

# valid Stan functions we deliberately do not support, for better messages
KNOWN_UNSUPPORTED_FNS = {
    "log_sum_exp", "log_mix", "softmax", "to_vector", "to_matrix", "inverse",
    "cholesky_decompose", "multi_normal", "integrate_ode_rk45", "append_row",
    "diag_matrix", "rows", "cols", "num_elements", "size", "sd", "variance",
    "normal_lpdf", "normal_lupdf", "fmin", "fmax", "min", "max",
}


@dataclass
class Symbol:
    name: str
    ty: Ty
    origin: str  # data | tdata | param | tparam | gq | local | loopvar
    constraint: Optional[Constraint] = None
    decl: Optional[Decl] = None


@dataclass
class TypedProgram:
    """Type-annotated program plus symbol tables."""

    program: Program
    symbols: dict = field(default_factory=dict)   # name -> Symbol (top-level decls)
    tables: dict = field(default_factory=dict)    # block name -> {name: Symbol}

    @property
    def data_symbols(self):
        return [s for s in self.symbols.values() if s.origin == "data"]

    @property
    def parameter_symbols(self):
        return [s for s in self.symbols.values() if s.origin == "param"]


_READABLE = {
    "data": (),
    "transformed data": ("data", "tdata"),
    "parameters": (),
    "transformed parameters": ("data", "tdata", "param", "tparam"),
    "model": ("data", "tdata", "param", "tparam"),
    "generated quantities": ("data", "tdata", "param", "tparam", "gq"),
}

_DECL_ORIGIN = {
    "data": "data",
    "transformed data": "tdata",
    "parameters": "param",
    "transformed parameters": "tparam",
    "model": "local",
    "generated quantities": "gq",
}

_ASSIGNABLE = {
    "transformed data": ("tdata", "local"),
    "transformed parameters": ("tparam", "local"),
    "model": ("local",),
    "generated quantities": ("gq", "local"),
}


class _Checker:
    def __init__(self, program: Program):
        self.program = program
        self.symbols = {}           # top-level names
        self.tables = {}
        self.block = None
        self.scopes = [self.symbols]

    # -- scope helpers -----------------------------------------------------------

    def lookup(self, name, pos):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        raise UndefinedIdentifier(f"undefined identifier {name!r}", pos.line, pos.column)

    def declare(self, sym: Symbol, pos):
        for scope in reversed(self.scopes):
            if sym.name in scope:
                raise IllegalAssignment(
                    f"{sym.name!r} is already declared", pos.line, pos.column)
        self.scopes[-1][sym.name] = sym

    def visible(self, sym: Symbol, pos):
        allowed = _READABLE[self.block] + ("local", "loopvar")
        if sym.origin not in allowed:
            raise UndefinedIdentifier(
                f"{sym.name!r} ({sym.origin}) is not visible in the {self.block} block",
                pos.line, pos.column)

    # -- program walk --------------------------------------------------------------

    def run(self) -> TypedProgram:
        for name, stmts in self.program.blocks.items():
            self.block = name
            decl_only = name in ("data", "parameters")
            for s in stmts:
                if decl_only and not isinstance(s, DeclStmt):
                    raise UnsupportedConstruct(
                        f"only declarations are allowed in the {name} block",
                        s.pos.line, s.pos.column)
                self.stmt(s)
            self.tables[name] = dict(self.symbols)
        return TypedProgram(self.program, self.symbols, self.tables)

    # -- declarations -----------------------------------------------------------------

    def decl(self, d: Decl, origin):
        spec = d.type_spec
        ty = self._type_of_spec(d)
        constraint = spec.constraint
        if origin == "param":
            if ty.base == "int" or (ty.base == "array" and ty.elem.base == "int"):
                raise TypeMismatch(
                    "parameters must be continuous (int not allowed)",
                    d.pos.line, d.pos.column)
            if d.init is not None:
                raise IllegalAssignment(
                    "parameters cannot be initialized", d.pos.line, d.pos.column)
        if origin == "data" and d.init is not None:
            raise IllegalAssignment(
                "data variables cannot be initialized", d.pos.line, d.pos.column)
        if not constraint.is_trivial:
            self._check_bound_exprs(constraint, d)
        for e in list(spec.sizes) + list(spec.array_dims):
            self._check_size_expr(e)
        sym = Symbol(d.name, ty, origin, constraint, d)
        self.declare(sym, d.pos)
        if d.init is not None:
            init_ty = self.expr(d.init)
            self._require_assignable(init_ty, ty, d.pos)
        return sym

    def _type_of_spec(self, d: Decl) -> Ty:
        spec = d.type_spec
        base = spec.base
        if base in ("int", "real"):
            elem = INT if base == "int" else REAL
            if spec.array_dims:
                return Ty("array", tuple(spec.array_dims), elem)
            return elem
        if base in ("vector", "row_vector"):
            return Ty(base, tuple(spec.sizes))
        if base in ("simplex", "ordered"):
            return Ty("vector", tuple(spec.sizes))
        if base == "matrix":
            return Ty("matrix", tuple(spec.sizes))
        raise UnsupportedConstruct(f"type {base!r}", d.pos.line, d.pos.column)

    def _check_bound_exprs(self, c: Constraint, d: Decl):
        for e in (c.lower, c.upper):
            if e is None:
                continue
            ty = self.expr(e, data_only=True)
            if not ty.is_scalar:
                raise TypeMismatch(
                    "constraint bounds must be scalar", d.pos.line, d.pos.column)

    def _check_size_expr(self, e):
        ty = self.expr(e, data_only=True)
        if ty.base != "int":
            raise TypeMismatch("sizes must be integers", e.pos.line, e.pos.column)

    # -- statements ----------------------------------------------------------------------

    def stmt(self, s):
        if isinstance(s, DeclStmt):
            self.decl(s.decl, _DECL_ORIGIN[self.block])
        elif isinstance(s, Assign):
            self._assign(s)
        elif isinstance(s, Sample):
            self._sample(s)
        elif isinstance(s, TargetPlus):
            if self.block != "model":
                raise UnsupportedConstruct(
                    "'target +=' outside the model block", s.pos.line, s.pos.column)
            ty = self.expr(s.value)
            if not ty.is_scalar:
                raise TypeMismatch(
                    "'target +=' needs a scalar", s.pos.line, s.pos.column)
        elif isinstance(s, If):
            cond_ty = self.expr(s.cond)
            if not cond_ty.is_scalar:
                raise TypeMismatch(
                    "condition must be scalar", s.pos.line, s.pos.column)
            self.stmt(s.then)
            if s.orelse is not None:
                self.stmt(s.orelse)
        elif isinstance(s, For):
            for bound in (s.low, s.high):
                ty = self.expr(bound)
                if ty.base != "int":
                    raise TypeMismatch(
                        "loop bounds must be integers", s.pos.line, s.pos.column)
            self.scopes.append({})
            self.declare(Symbol(s.var, INT, "loopvar"), s.pos)
            self.stmt(s.body)
            self.scopes.pop()
        elif isinstance(s, BlockStmt):
            self.scopes.append({})
            for inner in s.stmts:
                self.stmt(inner)
            self.scopes.pop()
        else:
            raise TypeError(f"unknown statement {s!r}")

    def _assign(self, s: Assign):
        sym, target_ty = self._lvalue(s.target)
        allowed = _ASSIGNABLE.get(self.block, ())
        if sym.origin not in allowed:
            raise IllegalAssignment(
                f"cannot assign to {sym.name!r} ({sym.origin}) in the {self.block} block",
                s.pos.line, s.pos.column)
        value_ty = self.expr(s.value)
        self._require_assignable(value_ty, target_ty, s.pos)

    def _lvalue(self, e):
        if isinstance(e, Ident):
            sym = self.lookup(e.name, e.pos)
            self.visible(sym, e.pos)
            e.ty = sym.ty
            return sym, sym.ty
        if isinstance(e, Index):
            if not isinstance(e.base, Ident):
                raise IllegalAssignment(
                    "assignment target must be a variable or indexed variable",
                    e.pos.line, e.pos.column)
            sym = self.lookup(e.base.name, e.base.pos)
            self.visible(sym, e.base.pos)
            e.base.ty = sym.ty
            ty = self._index_type(sym.ty, e)
            e.ty = ty
            return sym, ty
        raise IllegalAssignment(
            "assignment target must be a variable or indexed variable",
            e.pos.line, e.pos.column)

    def _sample(self, s: Sample):
        if self.block != "model":
            raise UnsupportedConstruct(
                "sampling statements only belong in the model block",
                s.pos.line, s.pos.column)
        if s.dist.endswith("_rng"):
            raise UnsupportedConstruct(
                "RNG suffix on a sampling statement", s.pos.line, s.pos.column)
        if s.dist not in REGISTRY:
            raise UndefinedIdentifier(
                f"unknown distribution {s.dist!r}", s.pos.line, s.pos.column)
        value_ty = self.expr(s.value)
        sym = self._sample_lhs_symbol(s.value)
        if sym.origin not in ("param", "tparam", "data"):
            raise IllegalAssignment(
                f"sampling statement left-hand side must be a parameter, "
                f"transformed parameter or data (got {sym.origin})",
                s.pos.line, s.pos.column)
        if len(s.args) != ARITY[s.dist]:
            raise TypeMismatch(
                f"{s.dist} takes {ARITY[s.dist]} parameter(s), got {len(s.args)}",
                s.pos.line, s.pos.column)
        discrete = REGISTRY[s.dist].discrete
        if discrete and not self._is_int_like(value_ty):
            raise TypeMismatch(
                f"{s.dist} is discrete; left-hand side must be int-typed",
                s.pos.line, s.pos.column)
        if not discrete and self._is_int_like(value_ty):
            raise TypeMismatch(
                f"{s.dist} is continuous; left-hand side must be real-typed",
                s.pos.line, s.pos.column)
        for a in s.args:
            ty = self.expr(a)
            if ty.base == "matrix":
                raise TypeMismatch(
                    "matrix-valued distribution parameters are not supported",
                    s.pos.line, s.pos.column)

    def _sample_lhs_symbol(self, e):
        node = e
        while isinstance(node, Index):
            node = node.base
        if not isinstance(node, Ident):
            raise IllegalAssignment(
                "sampling statement left-hand side must be a (possibly indexed) variable",
                e.pos.line, e.pos.column)
        return self.lookup(node.name, node.pos)

    @staticmethod
    def _is_int_like(ty: Ty):
        return ty.base == "int" or (ty.base == "array" and ty.elem.base == "int")

    # -- expressions ------------------------------------------------------------------------

    def expr(self, e, data_only=False) -> Ty:
        ty = self._expr(e, data_only)
        e.ty = ty
        return ty

    def _expr(self, e, data_only) -> Ty:
        if isinstance(e, IntLit):
            return INT
        if isinstance(e, RealLit):
            return REAL
        if isinstance(e, Ident):
            sym = self.lookup(e.name, e.pos)
            if data_only:
                if sym.origin not in ("data", "tdata"):
                    raise TypeMismatch(
                        f"{e.name!r} ({sym.origin}) cannot appear here; only data "
                        "and transformed data may size or bound declarations",
                        e.pos.line, e.pos.column)
            else:
                self.visible(sym, e.pos)
            return sym.ty
        if isinstance(e, Unary):
            ty = self.expr(e.operand, data_only)
            if ty.base not in ("int", "real", "vector", "row_vector", "matrix"):
                raise TypeMismatch(f"cannot negate {ty}", e.pos.line, e.pos.column)
            return ty
        if isinstance(e, Binary):
            return self._binary(e, data_only)
        if isinstance(e, Index):
            base_ty = self.expr(e.base, data_only)
            return self._index_type(base_ty, e, data_only)
        if isinstance(e, Call):
            return self._call(e, data_only)
        raise TypeError(f"unknown expression {e!r}")

    def _binary(self, e: Binary, data_only) -> Ty:
        lt = self.expr(e.left, data_only)
        rt = self.expr(e.right, data_only)
        op = e.op
        if op in ("==", "!=", "<", "<=", ">", ">="):
            if not (lt.is_scalar and rt.is_scalar):
                raise TypeMismatch(
                    f"comparison needs scalars, got {lt} {op} {rt}",
                    e.pos.line, e.pos.column)
            return INT
        if op == "^":
            if not (lt.is_scalar and rt.is_scalar):
                raise TypeMismatch(
                    f"'^' needs scalars, got {lt} ^ {rt}", e.pos.line, e.pos.column)
            return REAL
        if lt.is_scalar and rt.is_scalar:
            if lt.base == "int" and rt.base == "int":
                return INT
            return REAL
        # scalar-container broadcasting
        if lt.is_scalar and rt.base in ("vector", "row_vector", "matrix"):
            if op == "/":
                raise TypeMismatch(
                    f"cannot divide scalar by {rt.base}", e.pos.line, e.pos.column)
            return rt
        if rt.is_scalar and lt.base in ("vector", "row_vector", "matrix"):
            return lt
        if lt.base == rt.base and lt.base in ("vector", "row_vector", "matrix"):
            if op in ("+", "-"):
                self._require_same_size(lt, rt, e.pos)
                return lt
            raise TypeMismatch(
                f"elementwise {op!r} on {lt.base}s is not supported "
                "(use dot_product or a loop)", e.pos.line, e.pos.column)
        if op == "*":
            if lt.base == "matrix" and rt.base == "vector":
                return Ty("vector", (lt.sizes[0],) if lt.sizes else ())
            if lt.base == "row_vector" and rt.base == "vector":
                return REAL
            if lt.base == "matrix" and rt.base == "matrix":
                return Ty("matrix", (lt.sizes[0], rt.sizes[1]) if lt.sizes and rt.sizes else ())
        raise TypeMismatch(
            f"invalid operands {lt} {op} {rt}", e.pos.line, e.pos.column)

    def _require_assignable(self, value_ty: Ty, target_ty: Ty, pos):
        if value_ty == target_ty:
            return
        if value_ty.base == "int" and target_ty.base == "real":
            return  # implicit promotion
        if value_ty.base == target_ty.base and value_ty.base in (
                "vector", "row_vector", "matrix"):
            self._require_same_size(value_ty, target_ty, pos)
            return
        raise TypeMismatch(
            f"cannot assign {value_ty} to {target_ty}", pos.line, pos.column)

    def _require_same_size(self, lt: Ty, rt: Ty, pos):
        for a, b in zip(lt.sizes, rt.sizes):
            if isinstance(a, IntLit) and isinstance(b, IntLit) and a.value != b.value:
                raise ShapeMismatch(
                    f"size mismatch: {a.value} vs {b.value}", pos.line, pos.column)

    def _index_type(self, base_ty: Ty, e: Index, data_only=False) -> Ty:
        for idx in e.indices:
            ty = self.expr(idx, data_only)
            if ty.base != "int":
                raise TypeMismatch("indices must be integers",
                                   e.pos.line, e.pos.column)
        n = len(e.indices)
        if base_ty.base in ("vector", "row_vector") and n == 1:
            return REAL
        if base_ty.base == "array" and n == 1:
            return base_ty.elem
        if base_ty.base == "matrix" and n == 2:
            return REAL
        if base_ty.base == "matrix" and n == 1:
            raise UnsupportedConstruct(
                "matrix row indexing (use m[i, j])", e.pos.line, e.pos.column)
        raise TypeMismatch(
            f"cannot index {base_ty} with {n} subscript(s)", e.pos.line, e.pos.column)

    def _call(self, e: Call, data_only) -> Ty:
        name = e.name
        arg_tys = [self.expr(a, data_only) for a in e.args]

        def need(n):
            if len(arg_tys) != n:
                raise TypeMismatch(
                    f"{name} takes {n} argument(s), got {len(arg_tys)}",
                    e.pos.line, e.pos.column)

        if name in ELEMENTWISE_FNS:
            need(1)
            t = arg_tys[0]
            if t.base == "int":
                return INT if name == "abs" else REAL
            if t.base in ("real", "vector", "row_vector", "matrix"):
                return t
            raise TypeMismatch(f"{name} cannot take {t}", e.pos.line, e.pos.column)
        if name == "pow":
            need(2)
            for t in arg_tys:
                if not t.is_scalar:
                    raise TypeMismatch("pow needs scalars", e.pos.line, e.pos.column)
            return REAL
        if name == "dot_product":
            need(2)
            for t in arg_tys:
                if t.base not in ("vector", "row_vector"):
                    raise TypeMismatch(
                        "dot_product needs vectors", e.pos.line, e.pos.column)
            return REAL
        if name in ("sum", "mean"):
            need(1)
            t = arg_tys[0]
            if t.base in ("vector", "row_vector", "matrix"):
                return REAL
            if t.base == "array":
                if name == "sum" and t.elem.base == "int":
                    return INT
                return REAL
            raise TypeMismatch(f"{name} cannot take {t}", e.pos.line, e.pos.column)
        if name == "rep_vector":
            need(2)
            if not arg_tys[0].is_scalar or arg_tys[1].base != "int":
                raise TypeMismatch(
                    "rep_vector takes (real, int)", e.pos.line, e.pos.column)
            return Ty("vector", (e.args[1],))
        if name.endswith("_rng"):
            base = name[:-4]
            if base not in REGISTRY:
                raise UndefinedIdentifier(
                    f"unknown RNG function {name!r}", e.pos.line, e.pos.column)
            if self.block != "generated quantities":
                raise UnsupportedConstruct(
                    f"{name} outside the generated quantities block",
                    e.pos.line, e.pos.column)
            need(ARITY[base])
            return INT if REGISTRY[base].discrete else REAL
        if name in KNOWN_UNSUPPORTED_FNS:
            raise UnsupportedConstruct(
                f"function {name!r}", e.pos.line, e.pos.column)
        raise UndefinedIdentifier(
            f"unknown function {name!r}", e.pos.line, e.pos.column)


def check(program: Program) -> TypedProgram:
    """Type-check ``program``; returns the annotated TypedProgram."""
    return _Checker(program).run()
