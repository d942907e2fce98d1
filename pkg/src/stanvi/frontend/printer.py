"""Canonical pretty-printer; parse(print_program(ast)) is structurally ast."""

from __future__ import annotations

from .nodes import (
    Assign, Binary, BlockStmt, Call, Decl, DeclStmt, For, Ident, If, Index,
    IntLit, Program, RealLit, Sample, TargetPlus, Unary,
)

_PRECEDENCE = {
    "==": 1, "!=": 1,
    "<": 2, "<=": 2, ">": 2, ">=": 2,
    "+": 3, "-": 3,
    "*": 4, "/": 4,
    "^": 6,
}


def print_program(prog: Program) -> str:
    lines = []
    for name, stmts in prog.blocks.items():
        lines.append(f"{name} {{")
        for s in stmts:
            _stmt(s, lines, 1)
        lines.append("}")
    return "\n".join(lines) + "\n"


def _stmt(s, lines, depth):
    pad = "  " * depth
    if isinstance(s, DeclStmt):
        lines.append(pad + _decl(s.decl))
    elif isinstance(s, Assign):
        lines.append(f"{pad}{expr_str(s.target)} = {expr_str(s.value)};")
    elif isinstance(s, Sample):
        args = ", ".join(expr_str(a) for a in s.args)
        lines.append(f"{pad}{expr_str(s.value)} ~ {s.dist}({args});")
    elif isinstance(s, TargetPlus):
        lines.append(f"{pad}target += {expr_str(s.value)};")
    elif isinstance(s, If):
        lines.append(f"{pad}if ({expr_str(s.cond)})")
        _stmt(s.then, lines, depth + 1)
        if s.orelse is not None:
            lines.append(f"{pad}else")
            _stmt(s.orelse, lines, depth + 1)
    elif isinstance(s, For):
        lines.append(f"{pad}for ({s.var} in {expr_str(s.low)}:{expr_str(s.high)})")
        _stmt(s.body, lines, depth + 1)
    elif isinstance(s, BlockStmt):
        lines.append(pad + "{")
        for inner in s.stmts:
            _stmt(inner, lines, depth + 1)
        lines.append(pad + "}")
    else:
        raise TypeError(f"unknown statement {s!r}")


def _decl(d: Decl) -> str:
    spec = d.type_spec
    out = spec.base
    c = spec.constraint
    if not c.is_trivial:
        parts = []
        if c.lower is not None:
            parts.append(f"lower={expr_str(c.lower)}")
        if c.upper is not None:
            parts.append(f"upper={expr_str(c.upper)}")
        out += f"<{', '.join(parts)}>"
    if spec.sizes:
        out += "[" + ", ".join(expr_str(e) for e in spec.sizes) + "]"
    out += f" {d.name}"
    if spec.array_dims:
        out += "[" + ", ".join(expr_str(e) for e in spec.array_dims) + "]"
    if d.init is not None:
        out += f" = {expr_str(d.init)}"
    return out + ";"


def expr_str(e, parent_prec=0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, RealLit):
        return e.text if e.text else repr(e.value)
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, Unary):
        inner = expr_str(e.operand, 5)
        s = f"{e.op}{inner}"
        return f"({s})" if parent_prec > 5 else s
    if isinstance(e, Binary):
        prec = _PRECEDENCE[e.op]
        left = expr_str(e.left, prec)
        # all our binary ops associate left except ^, so bump the right side
        right = expr_str(e.right, prec if e.op == "^" else prec + 1)
        s = f"{left} {e.op} {right}"
        return f"({s})" if prec < parent_prec else s
    if isinstance(e, Index):
        return f"{expr_str(e.base, 7)}[" + ", ".join(expr_str(i) for i in e.indices) + "]"
    if isinstance(e, Call):
        return f"{e.name}(" + ", ".join(expr_str(a) for a in e.args) + ")"
    raise TypeError(f"unknown expression {e!r}")
