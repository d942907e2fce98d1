"""Recursive-descent parser for the Stan subset grammar (docs/grammar.md).

Constructs that are valid Stan but outside the subset raise
:class:`UnsupportedConstruct` naming the construct; malformed input raises
:class:`StanSyntaxError` with the offending token and the expected set.
"""

from __future__ import annotations

from ..errors import StanSyntaxError, UnsupportedConstruct
from .lexer import Token, tokenize
from .nodes import (
    Assign, Binary, BlockStmt, Call, Constraint, Decl, DeclStmt, Expr, For,
    Ident, If, Index, IntLit, Pos, Program, RealLit, Sample, Stmt, TargetPlus,
    TypeSpec, Unary,
)

SCALAR_TYPES = {"int", "real"}
VECTOR_TYPES = {"vector", "row_vector", "simplex", "ordered"}
TYPE_KEYWORDS = SCALAR_TYPES | VECTOR_TYPES | {"matrix", "array"}

UNSUPPORTED_TYPES = {
    "cov_matrix", "corr_matrix", "cholesky_factor_cov", "cholesky_factor_corr",
    "unit_vector", "positive_ordered", "complex", "tuple",
}

UNSUPPORTED_STMT_KEYWORDS = {"while", "break", "continue", "return"}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    # -- token helpers ---------------------------------------------------------

    def peek(self, offset=0) -> Token:
        j = self.i + offset
        if j < len(self.tokens):
            return self.tokens[j]
        last = self.tokens[-1] if self.tokens else Token("eof", "", 1, 1)
        return Token("eof", "<end of input>", last.line, last.column + len(last.text))

    def advance(self) -> Token:
        tok = self.peek()
        self.i += 1
        return tok

    def at(self, text) -> bool:
        return self.peek().text == text and self.peek().kind != "eof"

    def expect(self, text, expected=None) -> Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            what = expected or repr(text)
            raise StanSyntaxError(
                f"expected {what}, found {tok.text!r}", tok.line, tok.column)
        return self.advance()

    def pos(self) -> Pos:
        tok = self.peek()
        return Pos(tok.line, tok.column)

    def unsupported(self, construct, tok=None):
        tok = tok or self.peek()
        raise UnsupportedConstruct(
            f"unsupported construct: {construct}", tok.line, tok.column)

    # -- program / blocks ---------------------------------------------------------

    def parse_program(self) -> Program:
        prog = Program()
        order = []
        while self.peek().kind != "eof":
            name = self._block_header()
            if name in prog.blocks:
                tok = self.peek()
                raise StanSyntaxError(f"duplicate block {name!r}", tok.line, tok.column)
            order.append(name)
            self.expect("{", "'{' to open block")
            stmts = []
            while not self.at("}"):
                if self.peek().kind == "eof":
                    tok = self.peek()
                    raise StanSyntaxError(f"unclosed block {name!r}", tok.line, tok.column)
                stmts.append(self.parse_statement())
            self.expect("}")
            prog.blocks[name] = stmts
        _check_block_order(order, self.tokens)
        return prog

    def _block_header(self) -> str:
        tok = self.peek()
        if tok.text == "functions":
            self.unsupported("functions block (user-defined functions)")
        if tok.text in ("data", "parameters", "model"):
            self.advance()
            return tok.text
        if tok.text == "transformed":
            self.advance()
            nxt = self.advance()
            if nxt.text == "data":
                return "transformed data"
            if nxt.text == "parameters":
                return "transformed parameters"
            raise StanSyntaxError(
                "expected 'data' or 'parameters' after 'transformed'",
                nxt.line, nxt.column)
        if tok.text == "generated":
            self.advance()
            self.expect("quantities", "'quantities'")
            return "generated quantities"
        raise StanSyntaxError(
            f"expected a block header, found {tok.text!r}", tok.line, tok.column)

    # -- statements ------------------------------------------------------------------

    def parse_statement(self) -> Stmt:
        tok = self.peek()
        if tok.text in UNSUPPORTED_STMT_KEYWORDS:
            self.unsupported(f"'{tok.text}' statement")
        if tok.text in ("print", "reject") and self.peek(1).text == "(":
            self.unsupported(f"'{tok.text}' statement")
        if tok.text in UNSUPPORTED_TYPES:
            self.unsupported(f"'{tok.text}' type")
        if tok.text == "{":
            pos = self.pos()
            self.advance()
            stmts = []
            while not self.at("}"):
                if self.peek().kind == "eof":
                    raise StanSyntaxError("unclosed '{'", tok.line, tok.column)
                stmts.append(self.parse_statement())
            self.expect("}")
            return BlockStmt(stmts, pos=pos)
        if tok.text == "if":
            return self._if_statement()
        if tok.text == "for":
            return self._for_statement()
        if tok.text == "target":
            pos = self.pos()
            self.advance()
            self.expect("+=", "'+=' after 'target'")
            value = self.parse_expression()
            self.expect(";")
            return TargetPlus(value, pos=pos)
        if tok.text in TYPE_KEYWORDS and tok.kind == "keyword":
            pos = self.pos()
            decl = self.parse_declaration()
            return DeclStmt(decl, pos=pos)
        # two identifiers in a row look like a declaration with an unknown type
        if tok.kind == "identifier" and self.peek(1).kind == "identifier":
            self.unsupported(f"declaration with unsupported type '{tok.text}'")
        return self._expression_statement()

    def _if_statement(self) -> Stmt:
        pos = self.pos()
        self.expect("if")
        self.expect("(")
        cond = self.parse_expression()
        self.expect(")")
        then = self.parse_statement()
        orelse = None
        if self.at("else"):
            self.advance()
            orelse = self.parse_statement()
        return If(cond, then, orelse, pos=pos)

    def _for_statement(self) -> Stmt:
        pos = self.pos()
        self.expect("for")
        self.expect("(")
        var = self._identifier("loop variable")
        self.expect("in")
        low = self.parse_expression()
        self.expect(":", "':' in loop range")
        high = self.parse_expression()
        self.expect(")")
        body = self.parse_statement()
        return For(var, low, high, body, pos=pos)

    def _expression_statement(self) -> Stmt:
        pos = self.pos()
        expr = self.parse_expression()
        tok = self.peek()
        if tok.text == "~":
            self.advance()
            dist_tok = self.peek()
            dist = self._identifier("distribution name")
            self.expect("(", "'(' after distribution name")
            args = self._arg_list()
            if self.peek().text == "T":
                self.unsupported("truncation 'T[ , ]'")
            self.expect(";")
            _ = dist_tok
            return Sample(expr, dist, args, pos=pos)
        if tok.text == "=":
            if not isinstance(expr, (Ident, Index)):
                raise StanSyntaxError(
                    "assignment target must be a variable or indexed variable",
                    tok.line, tok.column)
            self.advance()
            value = self.parse_expression()
            self.expect(";")
            return Assign(expr, value, pos=pos)
        if tok.text in ("+=", "-=", "*=", "/="):
            self.unsupported(f"compound assignment '{tok.text}' (only 'target +=')")
        if isinstance(expr, Call) and tok.text == ";":
            self.unsupported(f"statement-level call to '{expr.name}'")
        raise StanSyntaxError(
            f"expected '~', '=' or ';', found {tok.text!r}", tok.line, tok.column)

    # -- declarations --------------------------------------------------------------------

    def parse_declaration(self) -> Decl:
        pos = self.pos()
        tok = self.advance()
        base = tok.text
        array_dims = []
        if base == "array":
            self.expect("[")
            array_dims = self._arg_list(closing="]")
            self.expect("]")
            if len(array_dims) != 1:
                self.unsupported("multidimensional array", tok)
            tok = self.advance()
            base = tok.text
            if base not in TYPE_KEYWORDS or base == "array":
                raise StanSyntaxError(
                    f"expected element type after 'array[...]', found {base!r}",
                    tok.line, tok.column)
            if base not in SCALAR_TYPES:
                self.unsupported(f"array of {base}", tok)
        constraint = self._constraint()
        sizes = []
        if base in ("vector", "row_vector", "simplex", "ordered"):
            self.expect("[", f"'[' with the {base} size")
            sizes = self._arg_list(closing="]")
            self.expect("]")
            if len(sizes) != 1:
                raise StanSyntaxError(f"{base} takes one size", tok.line, tok.column)
        elif base == "matrix":
            self.expect("[", "'[' with the matrix sizes")
            sizes = self._arg_list(closing="]")
            self.expect("]")
            if len(sizes) != 2:
                raise StanSyntaxError("matrix takes two sizes", tok.line, tok.column)
        if base in ("simplex", "ordered") and not constraint.is_trivial:
            raise StanSyntaxError(f"{base} cannot carry bounds", tok.line, tok.column)
        name = self._identifier("declared name")
        if self.at("["):
            if array_dims:
                self.unsupported("mixed array syntaxes")
            if base not in SCALAR_TYPES:
                self.unsupported(f"array of {base}")
            self.advance()
            array_dims = self._arg_list(closing="]")
            self.expect("]")
            if len(array_dims) != 1:
                self.unsupported("multidimensional array")
        init = None
        if self.at("="):
            self.advance()
            init = self.parse_expression()
        self.expect(";")
        spec = TypeSpec(base, constraint, sizes, array_dims)
        return Decl(name, spec, init, pos=pos)

    def _constraint(self) -> Constraint:
        if not self.at("<"):
            return Constraint()
        self.advance()
        lower = upper = None
        while True:
            tok = self.advance()
            if tok.text in ("offset", "multiplier"):
                self.unsupported(f"'{tok.text}' transform annotation", tok)
            if tok.text not in ("lower", "upper"):
                raise StanSyntaxError(
                    f"expected 'lower' or 'upper', found {tok.text!r}",
                    tok.line, tok.column)
            self.expect("=")
            # additive precedence: a bare '>' must close the constraint
            expr = self._additive()
            if tok.text == "lower":
                lower = expr
            else:
                upper = expr
            if self.at(","):
                self.advance()
                continue
            break
        self.expect(">", "'>' to close the constraint")
        return Constraint(lower, upper)

    # -- expressions ----------------------------------------------------------------------

    def parse_expression(self) -> Expr:
        expr = self._equality()
        tok = self.peek()
        if tok.text == "?":
            self.unsupported("ternary operator '?:'")
        if tok.text in ("&&", "||"):
            self.unsupported(f"logical operator '{tok.text}'")
        return expr

    def _equality(self) -> Expr:
        expr = self._relational()
        while self.peek().text in ("==", "!="):
            pos = self.pos()
            op = self.advance().text
            expr = Binary(op, expr, self._relational(), pos=pos)
        return expr

    def _relational(self) -> Expr:
        expr = self._additive()
        while self.peek().text in ("<", "<=", ">", ">="):
            pos = self.pos()
            op = self.advance().text
            expr = Binary(op, expr, self._additive(), pos=pos)
        return expr

    def _additive(self) -> Expr:
        expr = self._multiplicative()
        while self.peek().text in ("+", "-"):
            pos = self.pos()
            op = self.advance().text
            expr = Binary(op, expr, self._multiplicative(), pos=pos)
        return expr

    def _multiplicative(self) -> Expr:
        expr = self._unary()
        while True:
            tok = self.peek()
            if tok.text in ("*", "/"):
                pos = self.pos()
                op = self.advance().text
                expr = Binary(op, expr, self._unary(), pos=pos)
                continue
            if tok.text in ("%", ".*", "./", "\\", "'"):
                self.unsupported(f"operator '{tok.text}'")
            break
        return expr

    def _unary(self) -> Expr:
        tok = self.peek()
        if tok.text == "!":
            self.unsupported("logical negation '!'")
        if tok.text in ("-", "+"):
            pos = self.pos()
            op = self.advance().text
            return Unary(op, self._unary(), pos=pos)
        return self._power()

    def _power(self) -> Expr:
        expr = self._postfix()
        if self.at("^"):
            pos = self.pos()
            self.advance()
            return Binary("^", expr, self._unary(), pos=pos)
        return expr

    def _postfix(self) -> Expr:
        expr = self._primary()
        while self.at("["):
            pos = self.pos()
            self.advance()
            indices = self._arg_list(closing="]", allow_range_error=True)
            self.expect("]")
            expr = Index(expr, indices, pos=pos)
        return expr

    def _primary(self) -> Expr:
        tok = self.peek()
        pos = self.pos()
        if tok.kind == "int-literal":
            self.advance()
            return IntLit(int(tok.text), pos=pos)
        if tok.kind == "real-literal":
            self.advance()
            return RealLit(float(tok.text), text=tok.text, pos=pos)
        if tok.text == "(":
            self.advance()
            expr = self.parse_expression()
            self.expect(")")
            return expr
        if tok.kind == "identifier" or tok.text == "target":
            self.advance()
            if self.at("("):
                self.advance()
                args = self._arg_list()
                return Call(tok.text, args, pos=pos)
            if tok.text == "target":
                self.unsupported("reading 'target' as an expression", tok)
            return Ident(tok.text, pos=pos)
        raise StanSyntaxError(
            f"expected an expression, found {tok.text!r}", tok.line, tok.column)

    def _arg_list(self, closing=")", allow_range_error=False) -> list:
        args = []
        if self.at(closing):
            if closing == ")":
                self.advance()
            return args
        while True:
            args.append(self.parse_expression())
            if self.at(":") and allow_range_error:
                self.unsupported("index slicing with ':'")
            if self.at(","):
                self.advance()
                continue
            break
        if closing == ")":
            self.expect(")")
        return args

    def _identifier(self, what) -> str:
        tok = self.peek()
        if tok.kind != "identifier":
            raise StanSyntaxError(
                f"expected {what}, found {tok.text!r}", tok.line, tok.column)
        self.advance()
        return tok.text


def _check_block_order(order, tokens):
    from .nodes import BLOCK_ORDER

    ranks = {name: i for i, name in enumerate(BLOCK_ORDER)}
    last = -1
    for name in order:
        r = ranks[name]
        if r < last:
            tok = tokens[0] if tokens else Token("eof", "", 1, 1)
            raise StanSyntaxError(
                f"block {name!r} out of canonical order", tok.line, tok.column)
        last = r


def parse(tokens: list[Token]) -> Program:
    """Parse a token list (from :func:`tokenize`) into a :class:`Program`."""
    return _Parser(tokens).parse_program()


def parse_source(source: str) -> Program:
    return parse(tokenize(source))
