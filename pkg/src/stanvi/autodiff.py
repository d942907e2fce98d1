"""Reverse-mode automatic differentiation on a flat tape.

Nodes hold numpy values (scalars are 0-d arrays); a single reverse sweep over
the tape fills adjoints.  Branch conditions (comparisons) read node values and
are treated as constants of the evaluated branch, so `if`/`where` constructs
differentiate the taken branch.

The module-level math helpers (``exp``, ``log``, ``vsum``, ...) accept either
a :class:`Var` or a plain numpy value and dispatch accordingly, which lets the
model interpreter, the distributions and the guides share one code path for
plain evaluation and for gradient evaluation.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

from .errors import NaNDetected

__all__ = [
    "Tape", "Var", "grad", "value_and_grad", "hessian", "check_grad",
    "exp", "log", "log1p", "sqrt", "sigmoid", "lgamma", "tanh", "square",
    "vsum", "vmean", "dot", "matmul", "bmm", "stack", "reshape", "cumsum",
    "logsumexp", "where", "index_update", "softplus", "asvalue",
]


class Tape:
    """Topologically ordered record of one forward evaluation."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def leaf(self, value):
        return Var(self, np.asarray(value, dtype=np.float64))

    def backward(self, output, seed=1.0):
        """Reverse sweep from ``output``; fills the ``adj`` slot of every node."""
        for n in self.nodes:
            n.adj = None
        output.adj = np.asarray(seed, dtype=np.float64)
        for node in reversed(self.nodes):
            if node.adj is None or node.bwd is None:
                continue
            contribs = node.bwd(node.adj)
            for parent, contrib in zip(node.parents, contribs):
                if contrib is None:
                    continue
                if parent.adj is None:
                    parent.adj = np.zeros_like(parent.value)
                parent.adj = parent.adj + contrib


class Var:
    """One tape node: a value slot, parent links and a local backward rule."""

    __slots__ = ("tape", "value", "parents", "bwd", "adj")

    # force numpy to defer to our reflected operators instead of broadcasting
    # Var objects into object arrays
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, tape, value, parents=(), bwd=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.bwd = bwd
        self.adj = None
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Var({self.value!r})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        return _binary(self, other, np.add,
                       lambda a, b, out, g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract,
                       lambda a, b, out, g: (g, -g))

    def __rsub__(self, other):
        return _binary(self, other, lambda a, b: b - a,
                       lambda a, b, out, g: (-g, g))

    def __mul__(self, other):
        return _binary(self, other, np.multiply,
                       lambda a, b, out, g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, np.divide,
                       lambda a, b, out, g: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other):
        return _binary(self, other, lambda a, b: b / a,
                       lambda a, b, out, g: (-g * b / (a * a), g / a))

    def __neg__(self):
        return Var(self.tape, -self.value, (self,), lambda g: (-g,))

    def __abs__(self):
        s = np.sign(self.value)
        return Var(self.tape, np.abs(self.value), (self,), lambda g: (g * s,))

    def __pow__(self, p):
        if isinstance(p, Var):
            # x**y = exp(y log x); requires x > 0
            return exp(p * log(self))
        p = float(p)
        out = self.value ** p
        val = self.value
        return Var(self.tape, out, (self,),
                   lambda g: (g * p * val ** (p - 1.0),))

    def __rpow__(self, base):
        return exp(self * np.log(base))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    # -- comparisons: plain booleans, used as branch conditions ---------------

    def __gt__(self, other):
        return self.value > asvalue(other)

    def __ge__(self, other):
        return self.value >= asvalue(other)

    def __lt__(self, other):
        return self.value < asvalue(other)

    def __le__(self, other):
        return self.value <= asvalue(other)

    # -- indexing --------------------------------------------------------------

    def __getitem__(self, idx):
        out = self.value[idx]
        shape = self.value.shape

        def bwd(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return (full,)

        return Var(self.tape, np.asarray(out, dtype=np.float64), (self,), bwd)

    def __len__(self):
        return len(self.value)

    def __iter__(self):
        for i in range(len(self.value)):
            yield self[i]


def asvalue(x):
    """Underlying numpy value of ``x`` (identity for non-Var)."""
    return x.value if isinstance(x, Var) else x


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary(a, b, fwd, partials):
    """Broadcasting binary op; ``partials`` maps (aval, bval, out, adj) to grads."""
    if isinstance(a, Var):
        tape = a.tape
    else:
        tape = b.tape
    av = np.asarray(asvalue(a), dtype=np.float64)
    bv = np.asarray(asvalue(b), dtype=np.float64)
    out = fwd(av, bv)
    parents = []
    want_a = isinstance(a, Var)
    want_b = isinstance(b, Var)
    if want_a:
        parents.append(a)
    if want_b:
        parents.append(b)

    def bwd(g):
        ga, gb = partials(av, bv, out, g)
        res = []
        if want_a:
            res.append(_unbroadcast(np.asarray(ga), av.shape))
        if want_b:
            res.append(_unbroadcast(np.asarray(gb), bv.shape))
        return tuple(res)

    return Var(tape, out, tuple(parents), bwd)


def _unary(x, fwd, dfun):
    val = x.value
    out = fwd(val)
    return Var(x.tape, out, (x,), lambda g: (g * dfun(val, out),))


# -- elementwise primitives ----------------------------------------------------

def exp(x):
    if isinstance(x, Var):
        return _unary(x, np.exp, lambda v, o: o)
    return np.exp(x)


def log(x):
    if isinstance(x, Var):
        return _unary(x, np.log, lambda v, o: 1.0 / v)
    return np.log(x)


def log1p(x):
    if isinstance(x, Var):
        return _unary(x, np.log1p, lambda v, o: 1.0 / (1.0 + v))
    return np.log1p(x)


def sqrt(x):
    if isinstance(x, Var):
        return _unary(x, np.sqrt, lambda v, o: 0.5 / o)
    return np.sqrt(x)


def square(x):
    return x * x


def sigmoid(x):
    if isinstance(x, Var):
        return _unary(x, _sp.expit, lambda v, o: o * (1.0 - o))
    return _sp.expit(x)


def tanh(x):
    if isinstance(x, Var):
        return _unary(x, np.tanh, lambda v, o: 1.0 - o * o)
    return np.tanh(x)


def lgamma(x):
    if isinstance(x, Var):
        return _unary(x, _sp.gammaln, lambda v, o: _sp.digamma(v))
    return _sp.gammaln(x)


def softplus(x):
    """log(1 + exp(x)), overflow-safe for large |x|."""
    pos = where(asvalue(x) > 0, x, 0.0)
    return pos + log1p(exp(-abs(x)))


# -- reductions / structure ------------------------------------------------------

def vsum(x, axis=None):
    if not isinstance(x, Var):
        return np.sum(x, axis=axis)
    val = x.value
    out = np.sum(val, axis=axis)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, val.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), val.shape).copy(),)

    return Var(x.tape, np.asarray(out, dtype=np.float64), (x,), bwd)


def vmean(x, axis=None):
    n = asvalue(x).size if axis is None else asvalue(x).shape[axis]
    return vsum(x, axis=axis) / n


def dot(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return np.dot(a, b)
    return vsum(a * b)


def matmul(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return np.matmul(a, b)
    av = np.asarray(asvalue(a), dtype=np.float64)
    bv = np.asarray(asvalue(b), dtype=np.float64)
    out = av @ bv
    tape = a.tape if isinstance(a, Var) else b.tape
    want_a = isinstance(a, Var)
    want_b = isinstance(b, Var)
    parents = tuple(p for p, w in ((a, want_a), (b, want_b)) if w)

    def bwd(g):
        g = np.asarray(g)
        if av.ndim == 2 and bv.ndim == 1:
            ga = np.outer(g, bv)
            gb = av.T @ g
        elif av.ndim == 1 and bv.ndim == 2:
            ga = g @ bv.T
            gb = np.outer(av, g)
        elif av.ndim == 1 and bv.ndim == 1:
            ga = g * bv
            gb = g * av
        else:
            ga = g @ bv.swapaxes(-1, -2)
            gb = av.swapaxes(-1, -2) @ g
        res = []
        if want_a:
            res.append(ga)
        if want_b:
            res.append(gb)
        return tuple(res)

    return Var(tape, out, parents, bwd)


def bmm(a, b):
    """Batched block product: (d,p,q) x (d,q) -> (d,p)."""
    if not isinstance(a, Var) and not isinstance(b, Var):
        return np.einsum("dpq,dq->dp", a, b)
    av = np.asarray(asvalue(a), dtype=np.float64)
    bv = np.asarray(asvalue(b), dtype=np.float64)
    out = np.einsum("dpq,dq->dp", av, bv)
    tape = a.tape if isinstance(a, Var) else b.tape
    want_a = isinstance(a, Var)
    want_b = isinstance(b, Var)
    parents = tuple(p for p, w in ((a, want_a), (b, want_b)) if w)

    def bwd(g):
        res = []
        if want_a:
            res.append(np.einsum("dp,dq->dpq", g, bv))
        if want_b:
            res.append(np.einsum("dpq,dp->dq", av, g))
        return tuple(res)

    return Var(tape, out, parents, bwd)


def reshape(x, shape):
    if not isinstance(x, Var):
        return np.reshape(x, shape)
    old = x.value.shape
    return Var(x.tape, x.value.reshape(shape), (x,),
               lambda g: (g.reshape(old),))


def stack(parts, axis=0):
    """Stack scalars/arrays into one array; differentiably splits the adjoint."""
    if not any(isinstance(p, Var) for p in parts):
        return np.stack([np.asarray(p, dtype=np.float64) for p in parts], axis=axis)
    tape = next(p.tape for p in parts if isinstance(p, Var))
    vals = [np.asarray(asvalue(p), dtype=np.float64) for p in parts]
    out = np.stack(vals, axis=axis)
    varparts = [(i, p) for i, p in enumerate(parts) if isinstance(p, Var)]

    def bwd(g):
        slices = np.moveaxis(g, axis, 0)
        return tuple(slices[i] for i, _ in varparts)

    return Var(tape, out, tuple(p for _, p in varparts), bwd)


def cumsum(x):
    if not isinstance(x, Var):
        return np.cumsum(x)
    return Var(x.tape, np.cumsum(x.value), (x,),
               lambda g: (np.cumsum(g[::-1])[::-1],))


def logsumexp(x, axis=None):
    """Stable log-sum-exp built from primitives (max shift is a constant)."""
    m = np.max(asvalue(x), axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    if axis is None:
        return log(vsum(exp(x - np.squeeze(m)))) + np.squeeze(m)
    return log(vsum(exp(x - m), axis=axis)) + np.squeeze(m, axis=axis)


def where(cond, a, b):
    """Select by a constant boolean mask; adjoints flow to the taken side only."""
    cond = np.asarray(cond)
    if not isinstance(a, Var) and not isinstance(b, Var):
        return np.where(cond, a, b)
    tape = a.tape if isinstance(a, Var) else b.tape
    av = np.asarray(asvalue(a), dtype=np.float64)
    bv = np.asarray(asvalue(b), dtype=np.float64)
    out = np.where(cond, av, bv)
    want_a = isinstance(a, Var)
    want_b = isinstance(b, Var)
    parents = tuple(p for p, w in ((a, want_a), (b, want_b)) if w)

    def bwd(g):
        res = []
        if want_a:
            res.append(_unbroadcast(np.where(cond, g, 0.0), av.shape))
        if want_b:
            res.append(_unbroadcast(np.where(cond, 0.0, g), bv.shape))
        return tuple(res)

    return Var(tape, out, parents, bwd)


def index_update(x, idx, v):
    """Functional scatter: copy of ``x`` with ``x[idx] = v``."""
    if not isinstance(x, Var) and not isinstance(v, Var):
        out = np.array(x, dtype=np.float64)
        out[idx] = v
        return out
    tape = x.tape if isinstance(x, Var) else v.tape
    xv = np.asarray(asvalue(x), dtype=np.float64)
    out = xv.copy()
    out[idx] = asvalue(v)
    want_x = isinstance(x, Var)
    want_v = isinstance(v, Var)
    parents = tuple(p for p, w in ((x, want_x), (v, want_v)) if w)
    vshape = np.shape(asvalue(v))

    def bwd(g):
        res = []
        if want_x:
            gx = np.array(g)
            gx[idx] = 0.0
            res.append(gx)
        if want_v:
            res.append(_unbroadcast(np.asarray(g[idx]), vshape))
        return tuple(res)

    return Var(tape, out, parents, bwd)


# -- driver API -----------------------------------------------------------------

def value_and_grad(f, x):
    """Evaluate ``f`` at ``x`` on a fresh tape and run one reverse sweep.

    Returns ``(value, gradient)`` without the NaN guard of :func:`grad`;
    callers that tolerate NaN (the SVI loop turns it into a status) use this.
    """
    x = np.asarray(x, dtype=np.float64)
    tape = Tape()
    xv = tape.leaf(x)
    y = f(xv)
    if not isinstance(y, Var):
        # f ignored its input (constant function)
        return float(y), np.zeros_like(x)
    val = float(y.value)
    tape.backward(y)
    g = xv.adj if xv.adj is not None else np.zeros_like(x)
    return val, np.asarray(g, dtype=np.float64).reshape(x.shape)


def grad(f, x):
    """Value and exact reverse-mode gradient of a scalar function.

    Raises :class:`NaNDetected` if the value or any gradient component is NaN.
    """
    val, g = value_and_grad(f, x)
    if np.isnan(val) or np.isnan(g).any():
        raise NaNDetected("NaN in value or gradient")
    return val, g


def hessian(f, x, max_dim=200):
    """Symmetric Hessian from central finite differences of the gradient."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n > max_dim:
        raise ValueError(f"dimension {n} exceeds the hessian cap {max_dim}")
    H = np.empty((n, n))
    for i in range(n):
        h = max(1e-4, 1e-4 * abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        _, gp = grad(f, xp)
        _, gm = grad(f, xm)
        H[i] = (gp - gm) / (2.0 * h)
    H = 0.5 * (H + H.T)
    if np.isnan(H).any():
        raise NaNDetected("NaN in finite-difference hessian")
    return H


def _eval(f, x):
    tape = Tape()
    y = f(tape.leaf(x))
    return float(asvalue(y))


def check_grad(f, x, h=1e-5):
    """Max relative deviation between reverse-mode and central differences."""
    x = np.asarray(x, dtype=np.float64)
    _, g = value_and_grad(f, x)
    worst = 0.0
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fd = (_eval(f, xp) - _eval(f, xm)) / (2.0 * h)
        dev = abs(g[i] - fd) / max(1.0, abs(fd))
        worst = max(worst, dev)
    return worst
