"""Tiny arithmetic expression grammar for flux potentials and initial data.

Supported syntax: ``+ - * / ^`` (``**`` is accepted as a synonym for ``^``),
parentheses, unary minus, ``sin``/``cos``, numeric literals, the constant
``pi``, and a caller-supplied set of symbols (e.g. ``u, n1, n2, n3`` for a
flux potential, ``phi, theta, n1, n2, n3`` for initial data).

Compiled expressions evaluate with numpy broadcasting over array inputs.
"""

from __future__ import annotations

import math
import re
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ConfigError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)

_FUNCTIONS = {"sin": np.sin, "cos": np.cos}


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ConfigError(f"unexpected character {text[pos]!r} at position {pos} in expression {text!r}")
        if m.group("num") is not None:
            tokens.append(("num", m.group("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return tokens


class _Parser:
    """Recursive descent over: expr -> term (+|- term)*; term -> unary (*|/ unary)*;
    unary -> - unary | power; power -> atom (^ unary)?; atom -> num | name | name(expr) | (expr)."""

    def __init__(self, tokens: list[tuple[str, str]], symbols: frozenset[str], source: str):
        self.tokens = tokens
        self.i = 0
        self.symbols = symbols
        self.source = source

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def _next(self):
        tok = self._peek()
        self.i += 1
        return tok

    def _expect_op(self, op: str):
        kind, val = self._next()
        if kind != "op" or val != op:
            raise ConfigError(f"expected {op!r} in expression {self.source!r}")

    def parse(self):
        node = self.expr()
        if self.i != len(self.tokens):
            raise ConfigError(f"trailing input in expression {self.source!r}")
        return node

    def expr(self):
        node = self.term()
        while self._peek() == ("op", "+") or self._peek() == ("op", "-"):
            _, op = self._next()
            rhs = self.term()
            node = (("add" if op == "+" else "sub"), node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self._peek() == ("op", "*") or self._peek() == ("op", "/"):
            _, op = self._next()
            rhs = self.unary()
            node = (("mul" if op == "*" else "div"), node, rhs)
        return node

    def unary(self):
        if self._peek() == ("op", "-"):
            self._next()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self._peek() == ("op", "^"):
            self._next()
            return ("pow", base, self.unary())
        return base

    def atom(self):
        kind, val = self._next()
        if kind == "num":
            return ("const", float(val))
        if kind == "name":
            if val == "pi":
                return ("const", math.pi)
            if val in _FUNCTIONS:
                self._expect_op("(")
                arg = self.expr()
                self._expect_op(")")
                return ("call", val, arg)
            if val in self.symbols:
                return ("sym", val)
            raise ConfigError(
                f"unknown symbol {val!r} in expression {self.source!r}; allowed: {sorted(self.symbols)}"
            )
        if (kind, val) == ("op", "("):
            node = self.expr()
            self._expect_op(")")
            return node
        raise ConfigError(f"unexpected token in expression {self.source!r}")


def _evaluate(node, env: Mapping[str, np.ndarray]):
    tag = node[0]
    if tag == "const":
        return node[1]
    if tag == "sym":
        return env[node[1]]
    if tag == "neg":
        return -_evaluate(node[1], env)
    if tag == "call":
        return _FUNCTIONS[node[1]](_evaluate(node[2], env))
    a = _evaluate(node[1], env)
    b = _evaluate(node[2], env)
    if tag == "add":
        return a + b
    if tag == "sub":
        return a - b
    if tag == "mul":
        return a * b
    if tag == "div":
        return a / b
    if tag == "pow":
        return a ** b
    raise AssertionError(f"unknown node {tag}")


def compile_expression(text: str, symbols: Iterable[str]) -> Callable[..., np.ndarray]:
    """Compile ``text`` into ``f(**env)`` evaluating with numpy broadcasting.

    ``symbols`` is the full set of names the expression may reference; every
    call must supply all of them as keyword arguments.
    """
    symset = frozenset(symbols)
    node = _Parser(_tokenize(text), symset, text).parse()

    def func(**env):
        missing = symset - env.keys()
        if missing:
            raise TypeError(f"missing symbols {sorted(missing)} for expression {text!r}")
        return _evaluate(node, env)

    func.source = text  # type: ignore[attr-defined]
    return func
