"""Small arithmetic-expression language for profiles and potentials.

Grammar (``^`` is right associative and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Expressions are parsed once into a tree that can be evaluated on numpy
arrays and differentiated symbolically.
"""
import re
from dataclasses import dataclass

import numpy as np

from .errors import ExpressionError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "cosh": np.cosh,
    "sinh": np.sinh,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


@dataclass(frozen=True)
class Node:
    op: str            # 'num', 'var', 'neg', '+', '-', '*', '/', '^', or a function name
    args: tuple = ()
    value: object = None


def num(v):
    return Node("num", value=float(v))


ZERO, ONE = num(0.0), num(1.0)


def _tokenize(text):
    tokens, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
            raise ExpressionError(f"unexpected character {text[col - 1]!r}", col)
        start = m.start(m.lastindex)
        kind = ("num", "name", "op")[m.lastindex - 1]
        tok = m.group(m.lastindex)
        tokens.append((kind, "^" if tok == "**" else tok, start + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, tok, col = self.take()
        if tok != value:
            what = "end of input" if kind == "end" else repr(tok)
            raise ExpressionError(f"expected {value!r}, found {what}", col)

    def parse(self):
        node = self.expr()
        kind, tok, col = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {tok!r}", col)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Node(op, (node, self.term()))
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Node(op, (node, self.unary()))
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] in ("-", "+"):
            op = self.take()[1]
            inner = self.unary()
            return Node("neg", (inner,)) if op == "-" else inner
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Node("^", (base, self.unary()))
        return base

    def atom(self):
        kind, tok, col = self.take()
        if kind == "num":
            return num(tok)
        if kind == "name":
            if tok in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ExpressionError(f"function {tok!r} needs an argument list", self.peek()[2])
                self.take()
                arg = self.expr()
                self.expect(")")
                return Node(tok, (arg,))
            if tok in CONSTANTS:
                return num(CONSTANTS[tok])
            return Node("var", value=tok)
        if tok == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(tok)
        raise ExpressionError(f"unexpected {what}", col)


def variables(node):
    if node.op == "var":
        return {node.value}
    out = set()
    for a in node.args:
        out |= variables(a)
    return out


def evaluate(node, env):
    op = node.op
    if op == "num":
        return node.value
    if op == "var":
        try:
            return env[node.value]
        except KeyError:
            raise KeyError(f"unbound variable {node.value!r}") from None
    if op == "neg":
        return -evaluate(node.args[0], env)
    if op in FUNCTIONS:
        return FUNCTIONS[op](evaluate(node.args[0], env))
    a = evaluate(node.args[0], env)
    b = evaluate(node.args[1], env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return np.power(a, b)


def _add(a, b):
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if a.op == "num" and b.op == "num":
        return num(a.value + b.value)
    return Node("+", (a, b))


def _sub(a, b):
    if b == ZERO:
        return a
    if a.op == "num" and b.op == "num":
        return num(a.value - b.value)
    return Node("-", (a, b))


def _mul(a, b):
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if a.op == "num" and b.op == "num":
        return num(a.value * b.value)
    return Node("*", (a, b))


def _div(a, b):
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return Node("/", (a, b))


def _neg(a):
    if a.op == "num":
        return num(-a.value)
    return Node("neg", (a,))


def derivative(node, var):
    """Symbolic derivative of ``node`` with respect to variable ``var``."""
    op = node.op
    if op == "num":
        return ZERO
    if op == "var":
        return ONE if node.value == var else ZERO
    if op == "neg":
        return _neg(derivative(node.args[0], var))
    if op in FUNCTIONS:
        u = node.args[0]
        du = derivative(u, var)
        if du == ZERO:
            return ZERO
        if op == "sin":
            outer = Node("cos", (u,))
        elif op == "cos":
            outer = _neg(Node("sin", (u,)))
        elif op == "tan":
            outer = _div(ONE, Node("^", (Node("cos", (u,)), num(2))))
        elif op == "exp":
            outer = node
        elif op == "log":
            outer = _div(ONE, u)
        elif op == "sqrt":
            outer = _div(num(0.5), node)
        elif op == "tanh":
            outer = _sub(ONE, Node("^", (node, num(2))))
        elif op == "cosh":
            outer = Node("sinh", (u,))
        else:  # sinh
            outer = Node("cosh", (u,))
        return _mul(outer, du)
    a, b = node.args
    da, db = derivative(a, var), derivative(b, var)
    if op == "+":
        return _add(da, db)
    if op == "-":
        return _sub(da, db)
    if op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if op == "/":
        return _div(_sub(_mul(da, b), _mul(a, db)), Node("^", (b, num(2))))
    # power
    if db == ZERO:
        if b.op == "num":
            return _mul(_mul(b, Node("^", (a, num(b.value - 1.0)))), da)
        return _mul(_mul(b, Node("^", (a, _sub(b, ONE)))), da)
    # general a^b = exp(b log a)
    return _mul(node, _add(_mul(db, Node("log", (a,))), _div(_mul(b, da), a)))


class Expression:
    """A parsed expression; callable with keyword variable bindings."""

    def __init__(self, text, tree=None):
        self.text = text
        self.tree = _Parser(text).parse() if tree is None else tree

    @property
    def variables(self):
        return variables(self.tree)

    def __call__(self, **env):
        return evaluate(self.tree, env)

    def diff(self, var):
        return Expression(f"d/d{var}({self.text})", derivative(self.tree, var))

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse(text):
    if not isinstance(text, str):
        raise ExpressionError("expression must be a string", 1)
    if text.strip() == "":
        raise ExpressionError("empty expression", 1)
    return Expression(text)
