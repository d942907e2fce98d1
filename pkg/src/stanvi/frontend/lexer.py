"""Hand-written lexer for the Stan subset.

Strips ``//``, ``/* */`` and legacy ``#``-to-end-of-line comments; everything
else becomes a token carrying its 1-based source position.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import IllegalCharacter, UnterminatedComment

KEYWORDS = {
    "functions", "data", "transformed", "parameters", "model", "generated",
    "quantities",
    "int", "real", "vector", "row_vector", "matrix", "simplex", "ordered",
    "array",
    "if", "else", "for", "in", "while", "break", "continue", "return",
    "target", "lower", "upper",
}

# longest-match first
OPERATORS = (
    "+=", "-=", "*=", "/=", "==", "!=", "<=", ">=", "&&", "||", ".*", "./",
    "~", "=", "<", ">", "+", "-", "*", "/", "^", "%", "!", "?", ":", "|", "'",
)

PUNCTUATION = "(){}[],;"


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | identifier | int-literal | real-literal | operator | punctuation | eof
    text: str
    line: int
    column: int

    def __str__(self):
        return f"{self.text!r}@{self.line}:{self.column}"


def tokenize(source: str) -> list[Token]:
    """Lex ``source`` into tokens, dropping comments and whitespace."""
    tokens = []
    i = 0
    n = len(source)
    line = 1
    col = 1

    def advance(count):
        nonlocal i, line, col
        for _ in range(count):
            if source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                advance(1)
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                advance(1)
            continue
        if source.startswith("/*", i):
            start_line, start_col = line, col
            advance(2)
            while i < n and not source.startswith("*/", i):
                advance(1)
            if i >= n:
                raise UnterminatedComment("unterminated block comment", start_line, start_col)
            advance(2)
            continue
        if ch.isalpha() or ch == "_":
            start_line, start_col = line, col
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            advance(j - i)
            kind = "keyword" if text in KEYWORDS else "identifier"
            tokens.append(Token(kind, text, start_line, start_col))
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            tokens.append(_lex_number(source, i, line, col, advance))
            continue
        if ch in PUNCTUATION:
            tokens.append(Token("punctuation", ch, line, col))
            advance(1)
            continue
        matched = False
        for op in OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token("operator", op, line, col))
                advance(len(op))
                matched = True
                break
        if matched:
            continue
        raise IllegalCharacter(f"illegal character {ch!r}", line, col)
    return tokens


def _lex_number(source, i, line, col, advance):
    n = len(source)
    j = i
    is_real = False
    while j < n and source[j].isdigit():
        j += 1
    if j < n and source[j] == ".":
        is_real = True
        j += 1
        while j < n and source[j].isdigit():
            j += 1
    if j < n and source[j] in "eE":
        k = j + 1
        if k < n and source[k] in "+-":
            k += 1
        if k < n and source[k].isdigit():
            is_real = True
            j = k
            while j < n and source[j].isdigit():
                j += 1
    text = source[i:j]
    advance(j - i)
    kind = "real-literal" if is_real else "int-literal"
    return Token(kind, text, line, col)
