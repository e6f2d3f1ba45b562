"""Tiny arithmetic expression grammar for declarative problem definitions.

Grammar (precedence climbing): + - * / ^ with unary minus, parentheses,
functions sin cos exp abs sign sqrt, numeric literals, the constant pi, and
coordinates x1..xd. Expressions compile to vectorized closures on (n, d)
point arrays.
"""

from __future__ import annotations

import re

import numpy as np

from ..exceptions import ConfigError

__all__ = ["compile_expression", "compile_matrix"]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\^|\+|-|\*|/|\(|\)|,))"
)

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "sign": lambda t: np.where(t >= 0.0, 1.0, -1.0),  # a.e. convention
    "cbrt": np.cbrt,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ConfigError(f"cannot tokenize expression at: {text[pos:pos + 20]!r}")
        pos = m.end()
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
    tokens.append(("end", None))
    return tokens


class _Parser:
    """Precedence-climbing parser producing nested closure ASTs."""

    _BINARY = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
    _RIGHT = {"^"}

    def __init__(self, tokens, dim):
        self.tokens = tokens
        self.pos = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise ConfigError(f"expected {op!r}, found {val!r}")

    def parse(self):
        node = self.expression(0)
        if self.peek()[0] != "end":
            raise ConfigError(f"trailing input near {self.peek()[1]!r}")
        return node

    def expression(self, min_prec):
        node = self.atom()
        while True:
            kind, val = self.peek()
            if kind != "op" or val not in self._BINARY or self._BINARY[val] < min_prec:
                return node
            self.next()
            next_min = self._BINARY[val] + (0 if val in self._RIGHT else 1)
            rhs = self.expression(next_min)
            node = self._binary(val, node, rhs)

    @staticmethod
    def _binary(op, lhs, rhs):
        if op == "+":
            return lambda pts: lhs(pts) + rhs(pts)
        if op == "-":
            return lambda pts: lhs(pts) - rhs(pts)
        if op == "*":
            return lambda pts: lhs(pts) * rhs(pts)
        if op == "/":
            return lambda pts: lhs(pts) / rhs(pts)
        return lambda pts: lhs(pts) ** rhs(pts)

    def atom(self):
        kind, val = self.next()
        if kind == "num":
            return lambda pts, v=val: np.full(pts.shape[0], v)
        if kind == "op" and val == "-":
            inner = self.expression(3)  # binds tighter than * but looser than ^
            return lambda pts: -inner(pts)
        if kind == "op" and val == "(":
            node = self.expression(0)
            self.expect_op(")")
            return node
        if kind == "name":
            if val in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expression(0)
                self.expect_op(")")
                fn = _FUNCTIONS[val]
                return lambda pts: fn(arg(pts))
            if val in _CONSTANTS:
                const = _CONSTANTS[val]
                return lambda pts: np.full(pts.shape[0], const)
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                k = int(m.group(1)) - 1
                if not 0 <= k < self.dim:
                    raise ConfigError(f"coordinate {val} out of range for dimension {self.dim}")
                return lambda pts, k=k: pts[:, k]
            raise ConfigError(f"unknown identifier {val!r}")
        raise ConfigError(f"unexpected token {val!r}")


def compile_expression(text: str, dim: int):
    """Compile one expression string to a closure on (n, dim) point arrays."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigError("empty expression")
    return _Parser(_tokenize(text), dim).parse()


def compile_matrix(entries, dim: int):
    """Compile a nested list of expression strings to an (n, d, d) field."""
    if len(entries) != dim or any(len(row) != dim for row in entries):
        raise ConfigError(f"coefficient matrix must be {dim}x{dim}")
    compiled = [[compile_expression(entries[i][j], dim) for j in range(dim)] for i in range(dim)]

    def field(points):
        n = points.shape[0]
        out = np.empty((n, dim, dim))
        for i in range(dim):
            for j in range(dim):
                out[:, i, j] = compiled[i][j](points)
        return out

    return field
