"""A small arithmetic expression language for metric data and vector fields.

Grammar (``^`` binds tightest and is right-associative, unary minus binds
looser than ``^`` so ``-x1^2 == -(x1^2)``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are ``x1..xn``, ``y1..yn``, the constants ``pi`` and ``e``, and the
functions ``sin cos tan exp sqrt log tanh``.  Compiled expressions evaluate on
floats, numpy arrays, or :class:`~finsler_lab.jets.Jet` objects alike.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

from . import jets

FUNCTIONS: dict[str, Callable] = {
    "sin": jets.sin,
    "cos": jets.cos,
    "exp": jets.exp,
    "sqrt": jets.sqrt,
    "log": jets.log,
    "tanh": jets.tanh,
    "tan": jets.tan,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)
_VAR = re.compile(r"^([xy])([1-9][0-9]*)$")


class ExpressionError(ValueError):
    def __init__(self, message: str, source: str, pos: int):
        self.source = source
        self.pos = pos
        super().__init__(f"{message} at column {pos + 1} in {source!r}")


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m:
            raise ExpressionError("unexpected character", src, pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


# AST nodes are plain tuples: ("num", v) ("var", kind, index) ("neg", a)
# ("bin", op, a, b) ("call", fname, a)


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, op: str):
        kind, text, pos = self.take()
        if text != op:
            raise ExpressionError(f"expected {op!r}", self.src, pos)

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {text!r}", self.src, pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text in ("+", "-"):
            self.take()
            inner = self.unary()
            return ("neg", inner) if text == "-" else inner
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return ("bin", "^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return ("num", float(text))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {text!r}", self.src, pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return ("call", text, arg)
            if text in CONSTANTS:
                return ("num", CONSTANTS[text])
            m = _VAR.match(text)
            if not m:
                raise ExpressionError(f"unknown name {text!r}", self.src, pos)
            return ("var", m.group(1), int(m.group(2)) - 1)
        raise ExpressionError("unexpected end of input" if kind == "end" else f"unexpected {text!r}", self.src, pos)


def _pow(a, b):
    if isinstance(b, float) and b.is_integer() and not isinstance(a, jets.Jet):
        return a ** int(b) if b >= 0 else 1.0 / a ** int(-b)
    return a**b


_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "^": _pow,
}


def _evaluate(node, x, y):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        seq = x if node[1] == "x" else y
        return seq[node[2]]
    if tag == "neg":
        return -_evaluate(node[1], x, y)
    if tag == "bin":
        return _BINOPS[node[1]](_evaluate(node[2], x, y), _evaluate(node[3], x, y))
    return FUNCTIONS[node[1]](_evaluate(node[2], x, y))


def _variables(node, acc):
    tag = node[0]
    if tag == "var":
        acc.add((node[1], node[2]))
    elif tag == "neg" or tag == "call":
        _variables(node[-1], acc)
    elif tag == "bin":
        _variables(node[2], acc)
        _variables(node[3], acc)
    return acc


@dataclass(frozen=True)
class Expression:
    """A compiled expression; call it as ``expr(x, y)`` with coordinate sequences."""

    source: str
    tree: tuple

    def __call__(self, x: Sequence = (), y: Sequence = ()):
        return _evaluate(self.tree, x, y)

    def variables(self) -> set[tuple[str, int]]:
        return _variables(self.tree, set())

    def is_constant(self) -> bool:
        return not self.variables()


def parse(source: str | float | int, dim: int | None = None, allow_y: bool = True) -> Expression:
    """Compile ``source``; numbers are accepted and become constants.

    With ``dim`` given, variable indices are range-checked; ``allow_y=False``
    rejects tangent coordinates (used for base vector fields and metric data).
    """
    if isinstance(source, (int, float)):
        return Expression(repr(float(source)), ("num", float(source)))
    src = str(source)
    tree = _Parser(src).parse()
    expr = Expression(src, tree)
    for kind, idx in expr.variables():
        if kind == "y" and not allow_y:
            raise ExpressionError(f"tangent variable y{idx + 1} not allowed here", src, 0)
        if dim is not None and idx >= dim:
            raise ExpressionError(f"variable {kind}{idx + 1} exceeds dimension {dim}", src, 0)
    return expr


def constant(source: str | float | int) -> float:
    """Evaluate a variable-free expression such as ``"2*pi"``."""
    expr = parse(source)
    if not expr.is_constant():
        raise ExpressionError("expected a constant expression", expr.source, 0)
    return float(expr())
