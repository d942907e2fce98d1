"""Lowering of a typed program to an evaluable generative model.

A :class:`GenerativeModel` pairs the typed AST with a parameter layout
template.  Binding data (:meth:`GenerativeModel.prepare`) produces a
:class:`PreparedModel` with a concrete flat unconstrained layout, per-entry
transforms, and an evaluable log-joint over the flat vector.  The same tree
interpreter runs in plain-value mode (floats/arrays) and in gradient mode
(tape variables); the log-Jacobian terms of all declared constraints are
added to the target so the log-joint is a density over unconstrained space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import distributions as dists
from .autodiff import asvalue
from .errors import (
    DataSchemaMismatch, InvalidParameter, NaNDetected, NonScalarTarget,
    ShapeMismatch, UnsupportedConstruct,
)
from .frontend.nodes import (
    Assign, Binary, BlockStmt, Call, DeclStmt, For, Ident, If, Index, IntLit,
    RealLit, Sample, TargetPlus, Unary,
)
from .frontend.typecheck import TypedProgram
from .transforms import ConstraintSpec, Transform, make_transform


@dataclass(frozen=True)
class LayoutEntry:
    """One parameter's slot in the flat unconstrained vector."""

    name: str
    shape: tuple            # constrained shape: (), (n,) or (m, n)
    spec: ConstraintSpec
    transform: Transform
    offset: int
    length: int             # unconstrained length

    @property
    def constrained_size(self):
        return int(np.prod(self.shape)) if self.shape else 1

    def flat_names(self):
        """Stan-CSV style column names, row-major with 1-based suffixes."""
        if not self.shape:
            return [self.name]
        if len(self.shape) == 1:
            return [f"{self.name}.{i + 1}" for i in range(self.shape[0])]
        m, n = self.shape
        return [f"{self.name}.{i + 1}.{j + 1}" for i in range(m) for j in range(n)]


@dataclass(frozen=True)
class ParamLayout:
    entries: tuple
    dim: int

    def entry(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def flat_names(self):
        out = []
        for e in self.entries:
            out.extend(e.flat_names())
        return out


class GenerativeModel:
    """Compiled model; bind data with :meth:`prepare` to evaluate it."""

    def __init__(self, typed: TypedProgram):
        self.typed = typed
        prog = typed.program
        self.data_decls = [s.decl for s in prog.block("data")]
        self.param_decls = [s.decl for s in prog.block("parameters")]
        self.tdata_stmts = prog.block("transformed data")
        self.tparam_stmts = prog.block("transformed parameters")
        self.model_stmts = prog.block("model")
        self.gq_stmts = prog.block("generated quantities")
        self.tparam_names = [s.decl.name for s in self.tparam_stmts
                             if isinstance(s, DeclStmt)]
        self.gq_names = [s.decl.name for s in self.gq_stmts
                         if isinstance(s, DeclStmt)]

    def prepare(self, data=None) -> "PreparedModel":
        return PreparedModel(self, data or {})

    def dim(self, data=None) -> int:
        return self.prepare(data).layout.dim


def compile_model(typed: TypedProgram) -> GenerativeModel:
    """Lower a type-checked program; raises on constructs that leaked past
    the frontend (defensive)."""
    return GenerativeModel(typed)


# -- data binding -----------------------------------------------------------------

def _coerce_int(name, v):
    if isinstance(v, bool):
        raise DataSchemaMismatch(f"{name}: expected int, got bool")
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return int(v)
    raise DataSchemaMismatch(f"{name}: expected int, got {v!r}")


def _coerce_real(name, v):
    if isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool):
        return float(v)
    raise DataSchemaMismatch(f"{name}: expected real, got {v!r}")


class PreparedModel:
    """A model with data bound: concrete layout, transforms and evaluators."""

    def __init__(self, model: GenerativeModel, data):
        self.model = model
        if hasattr(data, "values_dict"):
            data = data.values_dict()
        self.base_env = {}
        self._bind_data(dict(data))
        self._run_transformed_data()
        self.layout = self._build_layout()

    # -- construction ------------------------------------------------------------

    def _bind_data(self, data):
        env = self.base_env
        for decl in self.model.data_decls:
            name = decl.name
            if name not in data:
                raise DataSchemaMismatch(f"missing data variable {name!r}")
            env[name] = self._coerce_value(decl, data[name], env)
        for decl in self.model.data_decls:
            self._validate_bounds(decl, env[decl.name], env)

    def _coerce_value(self, decl, raw, env):
        spec = decl.type_spec
        base = spec.base
        name = decl.name
        if base in ("int", "real") and not spec.array_dims:
            return (_coerce_int if base == "int" else _coerce_real)(name, raw)
        if base in ("int", "real") and spec.array_dims:
            n = _eval_size(spec.array_dims[0], env, name)
            arr = np.asarray(raw)
            if arr.shape != (n,):
                raise DataSchemaMismatch(
                    f"{name}: expected {n} elements, got shape {arr.shape}")
            if base == "int":
                if not np.all(np.equal(np.mod(arr, 1), 0)):
                    raise DataSchemaMismatch(f"{name}: expected integers")
                return arr.astype(np.int64)
            return arr.astype(np.float64)
        if base in ("vector", "row_vector"):
            n = _eval_size(spec.sizes[0], env, name)
            arr = np.asarray(raw, dtype=np.float64)
            if arr.shape != (n,):
                raise DataSchemaMismatch(
                    f"{name}: expected {n} elements, got shape {arr.shape}")
            return arr
        if base == "matrix":
            m = _eval_size(spec.sizes[0], env, name)
            n = _eval_size(spec.sizes[1], env, name)
            arr = np.asarray(raw, dtype=np.float64)
            if arr.shape != (m, n):
                raise DataSchemaMismatch(
                    f"{name}: expected shape ({m}, {n}), got {arr.shape}")
            return arr
        raise DataSchemaMismatch(f"{name}: unsupported data type {base!r}")

    def _validate_bounds(self, decl, value, env):
        c = decl.type_spec.constraint
        if c.is_trivial:
            return
        v = np.asarray(value, dtype=np.float64)
        if c.lower is not None:
            lo = float(asvalue(_eval(c.lower, env, None)))
            if np.any(v < lo):
                raise DataSchemaMismatch(
                    f"{decl.name}: value below declared lower bound {lo}")
        if c.upper is not None:
            hi = float(asvalue(_eval(c.upper, env, None)))
            if np.any(v > hi):
                raise DataSchemaMismatch(
                    f"{decl.name}: value above declared upper bound {hi}")

    def _run_transformed_data(self):
        ctx = _Ctx(self.base_env, block="transformed data")
        for s in self.model.tdata_stmts:
            _exec(s, ctx)

    def _build_layout(self):
        entries = []
        offset = 0
        env = self.base_env
        for decl in self.model.param_decls:
            spec = decl.type_spec
            base = spec.base
            if base == "real":
                shape = ()
                n = 1
            elif base in ("vector", "row_vector", "simplex", "ordered"):
                n = _eval_size(spec.sizes[0], env, decl.name)
                shape = (n,)
            elif base == "matrix":
                m = _eval_size(spec.sizes[0], env, decl.name)
                n2 = _eval_size(spec.sizes[1], env, decl.name)
                shape = (m, n2)
                n = m * n2
            else:
                raise UnsupportedConstruct(f"parameter type {base!r}")
            cspec = self._constraint_spec(decl, env)
            t = make_transform(cspec, n)
            length = t.unconstrained_length
            entries.append(LayoutEntry(decl.name, shape, cspec, t, offset, length))
            offset += length
        return ParamLayout(tuple(entries), offset)

    def _constraint_spec(self, decl, env) -> ConstraintSpec:
        spec = decl.type_spec
        if spec.base == "simplex":
            return ConstraintSpec.simplex()
        if spec.base == "ordered":
            return ConstraintSpec.ordered()
        c = spec.constraint
        if c.is_trivial:
            return ConstraintSpec.none()
        lo = float(asvalue(_eval(c.lower, env, None))) if c.lower is not None else None
        hi = float(asvalue(_eval(c.upper, env, None))) if c.upper is not None else None
        if lo is not None and hi is not None:
            return ConstraintSpec.interval(lo, hi)
        if lo is not None:
            return ConstraintSpec.lower_bound(lo)
        return ConstraintSpec.upper_bound(hi)

    # -- evaluation ------------------------------------------------------------------

    @property
    def dim(self):
        return self.layout.dim

    def _constrain_env(self, u):
        """Env with constrained parameter values bound; returns (env, sum ladj)."""
        env = dict(self.base_env)
        ladj_total = 0.0
        for e in self.layout.entries:
            if e.length == 1 and not e.shape:
                x, ladj = e.transform.forward(u[e.offset])
            else:
                x, ladj = e.transform.forward(u[e.offset:e.offset + e.length])
                if len(e.shape) == 2:
                    x = ad.reshape(x, e.shape)
            env[e.name] = x
            ladj_total = ladj_total + ladj
        return env, ladj_total

    def log_joint(self, u, _branches=None):
        """Log-density over unconstrained space (float or Var, matching ``u``)."""
        if np.ndim(asvalue(u)) != 1 or asvalue(u).shape[0] != self.layout.dim:
            raise DataSchemaMismatch(
                f"expected unconstrained vector of length {self.layout.dim}")
        env, target = self._constrain_env(u)
        ctx = _Ctx(env, block="model", target=target, branches=_branches)
        try:
            for s in self.model.tparam_stmts:
                _exec(s, ctx)
            for s in self.model.model_stmts:
                _exec(s, ctx)
        except InvalidParameter as ex:
            raise NaNDetected(f"invalid distribution parameter: {ex}") from ex
        total = ctx.target
        tv = asvalue(total)
        if np.ndim(tv) != 0:
            raise NonScalarTarget("target accumulator is not scalar")
        if math.isnan(float(tv)):
            raise NaNDetected("log-joint evaluated to NaN")
        return total

    def branch_frozen_log_joint(self, u0):
        """Log-joint with conditionals pinned to the branches taken at ``u0``.

        Finite differences of this function never step across a branch
        boundary, which is how second-order curvature at a conditional model
        is defined (the evaluated branch, matching first-order AD semantics).
        """
        recorder = _BranchLog(record=True)
        self.log_joint(np.asarray(u0, dtype=np.float64), _branches=recorder)
        taken = recorder.taken

        def pinned(u):
            return self.log_joint(u, _branches=_BranchLog(replay=list(taken)))

        return pinned

    def constrain(self, u):
        """Constrained parameter values (incl. transformed parameters) at ``u``."""
        env, _ = self._constrain_env(np.asarray(u, dtype=np.float64))
        ctx = _Ctx(env, block="transformed parameters")
        for s in self.model.tparam_stmts:
            _exec(s, ctx)
        names = [e.name for e in self.layout.entries] + self.model.tparam_names
        return {n: env[n] for n in names}

    def generated_quantities(self, constrained, rng):
        """Run the generated-quantities program for one constrained draw."""
        env = dict(self.base_env)
        env.update(constrained)
        ctx = _Ctx(env, block="generated quantities", rng=rng)
        for s in self.model.gq_stmts:
            _exec(s, ctx)
        out = {}
        for n in self.model.gq_names:
            v = env[n]
            if np.any(np.isnan(np.asarray(v, dtype=np.float64))):
                raise NaNDetected(f"generated quantity {n!r} is NaN")
            out[n] = v
        return out


# -- module-level ops mirroring the public surface ---------------------------------

def log_joint(m: GenerativeModel, data, u) -> float:
    """Σ statement contributions + Σ log|det J| at forward(u); -inf allowed."""
    return float(asvalue(m.prepare(data).log_joint(np.asarray(u, dtype=np.float64))))


def run_generated_quantities(m: GenerativeModel, data, constrained, rng):
    return m.prepare(data).generated_quantities(constrained, rng)


# -- the interpreter -------------------------------------------------------------------

class _Ctx:
    __slots__ = ("env", "target", "rng", "block", "branches")

    def __init__(self, env, block, target=0.0, rng=None, branches=None):
        self.env = env
        self.block = block
        self.target = target
        self.rng = rng
        self.branches = branches


class _BranchLog:
    """Records condition outcomes in execution order, or replays them.

    Sound because control-flow structure (loop bounds) is data-only, so the
    sequence of conditionals is identical across nearby evaluations.
    """

    __slots__ = ("taken", "_replay", "_pos")

    def __init__(self, record=False, replay=None):
        self.taken = [] if record else None
        self._replay = replay
        self._pos = 0

    def decide(self, truth):
        if self._replay is not None:
            truth = self._replay[self._pos]
            self._pos += 1
            return truth
        self.taken.append(truth)
        return truth


def _eval_size(e, env, name):
    v = _eval(e, env, None)
    n = int(asvalue(v))
    if n < 0:
        raise DataSchemaMismatch(f"{name}: negative size {n}")
    return n


def _truthy(v):
    return bool(asvalue(v) != 0)


def _exec(s, ctx: _Ctx):
    if isinstance(s, DeclStmt):
        decl = s.decl
        if decl.init is not None:
            val = _eval(decl.init, ctx.env, ctx)
            ctx.env[decl.name] = _shape_local(decl, val, ctx.env)
        else:
            ctx.env[decl.name] = _fresh_local(decl, ctx.env)
    elif isinstance(s, Assign):
        val = _eval(s.value, ctx.env, ctx)
        _store(s.target, val, ctx)
    elif isinstance(s, Sample):
        value = _eval(s.value, ctx.env, ctx)
        args = [_eval(a, ctx.env, ctx) for a in s.args]
        d = dists.make(s.dist, *args)
        try:
            lp = d.log_prob(value)
        except ValueError as ex:
            raise ShapeMismatch(
                f"shape error in '{s.dist}' sampling statement: {ex}",
                s.pos.line, s.pos.column) from ex
        ctx.target = ctx.target + lp
    elif isinstance(s, TargetPlus):
        v = _eval(s.value, ctx.env, ctx)
        if np.ndim(asvalue(v)) != 0:
            raise NonScalarTarget("'target +=' with a non-scalar value")
        ctx.target = ctx.target + v
    elif isinstance(s, If):
        truth = _truthy(_eval(s.cond, ctx.env, ctx))
        if ctx.branches is not None:
            truth = ctx.branches.decide(truth)
        if truth:
            _exec(s.then, ctx)
        elif s.orelse is not None:
            _exec(s.orelse, ctx)
    elif isinstance(s, For):
        lo = int(asvalue(_eval(s.low, ctx.env, ctx)))
        hi = int(asvalue(_eval(s.high, ctx.env, ctx)))
        saved = ctx.env.get(s.var)
        for i in range(lo, hi + 1):
            ctx.env[s.var] = i
            _exec(s.body, ctx)
        if saved is None:
            ctx.env.pop(s.var, None)
        else:
            ctx.env[s.var] = saved
    elif isinstance(s, BlockStmt):
        for inner in s.stmts:
            _exec(inner, ctx)
    else:
        raise UnsupportedConstruct(f"statement {type(s).__name__} leaked past the frontend")


def _fresh_local(decl, env):
    spec = decl.type_spec
    if spec.base == "int":
        return 0
    if spec.base == "real" and not spec.array_dims:
        return math.nan
    if spec.array_dims:
        n = _eval_size(spec.array_dims[0], env, decl.name)
        return np.zeros(n, dtype=np.int64) if spec.base == "int" else np.full(n, np.nan)
    if spec.base in ("vector", "row_vector", "simplex", "ordered"):
        n = _eval_size(spec.sizes[0], env, decl.name)
        return np.full(n, np.nan)
    if spec.base == "matrix":
        m = _eval_size(spec.sizes[0], env, decl.name)
        n = _eval_size(spec.sizes[1], env, decl.name)
        return np.full((m, n), np.nan)
    raise UnsupportedConstruct(f"local type {spec.base!r}")


def _shape_local(decl, val, env):
    spec = decl.type_spec
    if spec.base == "int":
        return int(asvalue(val))
    return val


def _store(target, val, ctx):
    if isinstance(target, Ident):
        ctx.env[target.name] = val
        return
    # indexed assignment: functional update keeps tape semantics intact
    base = ctx.env[target.base.name]
    idx = _index_tuple(target, ctx)
    ctx.env[target.base.name] = ad.index_update(base, idx, val)


def _index_tuple(e, ctx):
    idxs = [int(asvalue(_eval(i, ctx.env, ctx))) - 1 for i in e.indices]
    for i, raw in zip(idxs, e.indices):
        if i < 0:
            raise IndexError(f"index {i + 1} out of range (1-based)")
    return tuple(idxs) if len(idxs) > 1 else idxs[0]


_BUILTIN_UNARY = {
    "exp": ad.exp,
    "log": ad.log,
    "log1p": ad.log1p,
    "sqrt": ad.sqrt,
    "square": ad.square,
    "abs": abs,
    "inv_logit": ad.sigmoid,
}


def _eval(e, env, ctx):
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, RealLit):
        return e.value
    if isinstance(e, Ident):
        return env[e.name]
    if isinstance(e, Unary):
        v = _eval(e.operand, env, ctx)
        return -v if e.op == "-" else v
    if isinstance(e, Binary):
        return _eval_binary(e, env, ctx)
    if isinstance(e, Index):
        base = _eval(e.base, env, ctx)
        idxs = [int(asvalue(_eval(i, env, ctx))) - 1 for i in e.indices]
        if any(i < 0 for i in idxs):
            raise IndexError("index out of range (1-based)")
        if len(idxs) == 1:
            return base[idxs[0]]
        return base[idxs[0], idxs[1]]
    if isinstance(e, Call):
        return _eval_call(e, env, ctx)
    raise UnsupportedConstruct(f"expression {type(e).__name__} leaked past the frontend")


def _eval_binary(e, env, ctx):
    op = e.op
    a = _eval(e.left, env, ctx)
    b = _eval(e.right, env, ctx)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        if np.ndim(asvalue(a)) == 2 or np.ndim(asvalue(b)) == 2:
            if np.ndim(asvalue(a)) and np.ndim(asvalue(b)):
                return ad.matmul(a, b)
        if np.ndim(asvalue(a)) == 1 and np.ndim(asvalue(b)) == 1 \
                and e.left.ty is not None and e.left.ty.base == "row_vector":
            return ad.dot(a, b)
        return a * b
    if op == "/":
        if isinstance(a, int) and isinstance(b, int):
            return int(a / b) if b != 0 else _int_div_zero()
        return a / b
    if op == "^":
        return a ** b
    if op == "==":
        return int(asvalue(a) == asvalue(b))
    if op == "!=":
        return int(asvalue(a) != asvalue(b))
    if op == "<":
        return int(asvalue(a) < asvalue(b))
    if op == "<=":
        return int(asvalue(a) <= asvalue(b))
    if op == ">":
        return int(asvalue(a) > asvalue(b))
    if op == ">=":
        return int(asvalue(a) >= asvalue(b))
    raise UnsupportedConstruct(f"operator {op!r} leaked past the frontend")


def _int_div_zero():
    raise NaNDetected("integer division by zero")


def _eval_call(e, env, ctx):
    name = e.name
    args = [_eval(a, env, ctx) for a in e.args]
    if name in _BUILTIN_UNARY:
        return _BUILTIN_UNARY[name](args[0])
    if name == "logit":
        x = args[0]
        return ad.log(x) - ad.log1p(-x)
    if name == "pow":
        return args[0] ** args[1]
    if name == "dot_product":
        return ad.dot(args[0], args[1])
    if name == "sum":
        v = args[0]
        if isinstance(v, np.ndarray) and v.dtype.kind == "i":
            return int(v.sum())
        return ad.vsum(v)
    if name == "mean":
        return ad.vmean(args[0])
    if name == "rep_vector":
        n = int(asvalue(args[1]))
        return args[0] * np.ones(n) if isinstance(args[0], ad.Var) else np.full(n, float(args[0]))
    if name.endswith("_rng"):
        d = dists.make(name[:-4], *args)
        return d.sample(ctx.rng)
    raise UnsupportedConstruct(f"function {name!r} leaked past the frontend")
