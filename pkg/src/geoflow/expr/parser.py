"""Recursive-descent parser for the model-file expression grammar.

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' uint)?
    base   := name | number | '(' expr ')' | '-' base

Numbers are integers or decimal literals; decimals convert exactly
(``0.25`` is 1/4). Note that ``-x^2`` reads as ``(-x)^2`` under this grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from geoflow.expr.polynomial import Polynomial
from geoflow.expr.rational import RationalFunction


class ExpressionError(ValueError):
    """Syntax or semantic error in an expression, with a byte offset."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at byte offset {offset}")


@dataclass(frozen=True)
class Node:
    kind: str  # variable | number | add | sub | mul | div | pow | neg
    value: object = None
    children: tuple = ()


@dataclass(frozen=True)
class ExpressionTree:
    root: Node
    variables: tuple = field(default=())

    def free_variables(self) -> set:
        out = set()
        stack = [self.root]
        while stack:
            n = stack.pop()
            if n.kind == "variable":
                out.add(n.value)
            stack.extend(n.children)
        return out


_TOKEN = re.compile(r"\s*(?:(?P<number>\d+\.\d*|\.\d+|\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))")


def _tokenize(text: str):
    tokens = []
    pos = 0
    raw = text.encode("utf-8")
    # ASCII is the intended alphabet; offsets are reported in bytes
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[start]!r}", _byte(text, start), text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte(text, start)))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


def _byte(text, i):
    return len(text[:i].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = tuple(variables)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ExpressionError(msg, tok[2], self.text)

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Node("add" if op == "+" else "sub", children=(node, self.term()))
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Node("mul" if op == "*" else "div", children=(node, self.factor()))
        return node

    def factor(self):
        node = self.base()
        if self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[1] == "-":
                self.error("negative exponent")
            if tok[0] != "number":
                self.error("expected a non-negative integer exponent")
            if not tok[1].isdigit():
                self.error("fractional exponent")
            self.take()
            node = Node("pow", int(tok[1]), (node,))
            if self.peek()[1] == "^":
                self.error("chained exponent needs parentheses")
        return node

    def base(self):
        tok = self.peek()
        kind, val, off = tok
        if kind == "name":
            self.take()
            if val not in self.variables:
                self.error(f"unknown variable {val!r}", tok)
            return Node("variable", val)
        if kind == "number":
            self.take()
            return Node("number", Fraction(val if not val.endswith(".") else val[:-1]))
        if val == "(":
            self.take()
            node = self.expr()
            if self.peek()[1] != ")":
                self.error("expected ')'")
            self.take()
            return node
        if val == "-":
            self.take()
            return Node("neg", children=(self.base(),))
        if kind == "end":
            self.error("unexpected end of expression")
        self.error(f"unexpected token {val!r}")


def parse_expression(text: str, variables: Sequence[str]) -> ExpressionTree:
    p = _Parser(text, variables)
    root = p.expr()
    if p.peek()[0] != "end":
        p.error(f"unexpected token {p.peek()[1]!r}")
    return ExpressionTree(root, tuple(variables))


def to_rational_function(tree: ExpressionTree, variables: Sequence[str] | None = None) -> RationalFunction:
    """Flatten a parsed tree exactly into a RationalFunction."""
    vars = tuple(variables) if variables is not None else tree.variables

    def walk(n: Node) -> RationalFunction:
        k = n.kind
        if k == "number":
            return RationalFunction.constant(vars, n.value)
        if k == "variable":
            return RationalFunction.variable(vars, n.value)
        if k == "neg":
            return -walk(n.children[0])
        if k == "pow":
            return walk(n.children[0]) ** n.value
        if k == "div":
            return divide(walk(n.children[0]), n.children[1])
        a, b = (walk(c) for c in n.children)
        if k == "add":
            return a + b
        if k == "sub":
            return a - b
        return a * b

    def divide(a: RationalFunction, n: Node) -> RationalFunction:
        # peel products and powers so the denominator keeps its factored shape
        if n.kind == "pow":
            base = walk(n.children[0])
            if base.is_zero() and n.value > 0:
                raise ZeroDivisionError("division by the identically-zero polynomial")
            for _ in range(n.value):
                a = a / base
            return a
        if n.kind == "mul":
            return divide(divide(a, n.children[0]), n.children[1])
        b = walk(n)
        if b.is_zero():
            raise ZeroDivisionError("division by the identically-zero polynomial")
        return a / b

    return walk(tree.root)


def parse_rational(text: str, variables: Sequence[str]) -> RationalFunction:
    return to_rational_function(parse_expression(text, variables))


def parse_polynomial(text: str, variables: Sequence[str]) -> Polynomial:
    f = parse_rational(text, variables)
    if not f.is_polynomial():
        raise ExpressionError("expected a polynomial expression", 0, text)
    return f.num
