"""Small arithmetic language for nonlinear right-hand sides ``f(x, u)`` and ``h(x, u)``.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' unsigned-integer)?
    base   := number | var | func '(' expr ')' | '(' expr ')' | '-' base

Variables are ``x1`` .. ``x9`` and ``u1`` .. ``u9``; functions are ``sin``,
``cos``, ``tanh``, ``exp``, ``abs`` and ``sqrt``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "EvaluationError",
    "Expr",
    "parse_dynamics",
]

FUNCTIONS = ("sin", "cos", "tanh", "exp", "abs", "sqrt")
_VAR_RE = re.compile(r"^([xu])([1-9])$")
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message, position):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name, position):
        super().__init__(f"unknown identifier {name!r} at offset {position}")
        self.name = name
        self.position = position


class EvaluationError(ArithmeticError):
    """Raised when a guarded operation (division, sqrt) gets an invalid operand."""


# Node layout: ("num", value) | ("var", kind, index) | ("neg", node)
# | ("bin", op, left, right) | ("pow", node, k) | ("call", fname, node)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
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

    def expect_op(self, op):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            shown = "end of input" if kind == "end" else repr(val)
            raise ExpressionSyntaxError(f"expected {op!r}, found {shown}", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = ("bin", op, node, self.factor())
        return node

    def factor(self):
        node = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, val, pos = self.take()
            if kind != "num" or not val.isdigit():
                raise ExpressionSyntaxError("exponent must be an unsigned integer", pos)
            node = ("pow", node, int(val))
        return node

    def base(self):
        kind, val, pos = self.take()
        if kind == "num":
            return ("num", float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return ("call", val, arg)
            m = _VAR_RE.match(val)
            if not m:
                raise UnknownIdentifierError(val, pos)
            return ("var", m.group(1), int(m.group(2)))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and val == "-":
            return ("neg", self.base())
        shown = "end of input" if kind == "end" else repr(val)
        raise ExpressionSyntaxError(f"expected a value, found {shown}", pos)


def _guarded_div(a, b):
    if np.any(np.asarray(b) == 0.0):
        raise EvaluationError("division by zero")
    return a / b


def _guarded_sqrt(a):
    if np.any(np.asarray(a) < 0.0):
        raise EvaluationError("sqrt of a negative number")
    return np.sqrt(a)


_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "exp": np.exp,
    "abs": np.abs,
    "sqrt": _guarded_sqrt,
}


def _compile(node):
    tag = node[0]
    if tag == "num":
        c = node[1]
        return lambda x, u: c
    if tag == "var":
        _, kind, idx = node
        j = idx - 1
        if kind == "x":
            return lambda x, u: x[..., j]
        return lambda x, u: u[..., j]
    if tag == "neg":
        inner = _compile(node[1])
        return lambda x, u: -inner(x, u)
    if tag == "pow":
        inner, k = _compile(node[1]), node[2]
        if k == 2:
            def sq(x, u):
                v = inner(x, u)
                return v * v
            return sq
        return lambda x, u: inner(x, u) ** k
    if tag == "call":
        fn, inner = _FUNCS[node[1]], _compile(node[2])
        return lambda x, u: fn(inner(x, u))
    _, op, left, right = node
    lf, rf = _compile(left), _compile(right)
    if op == "+":
        return lambda x, u: lf(x, u) + rf(x, u)
    if op == "-":
        return lambda x, u: lf(x, u) - rf(x, u)
    if op == "*":
        return lambda x, u: lf(x, u) * rf(x, u)
    return lambda x, u: _guarded_div(lf(x, u), rf(x, u))


def _source(node):
    """Python source for a node; only validated tokens reach the generated text."""
    tag = node[0]
    if tag == "num":
        return repr(float(node[1]))
    if tag == "var":
        return f"{node[1]}[..., {node[2] - 1}]"
    if tag == "neg":
        return f"(-{_source(node[1])})"
    if tag == "pow":
        inner = _source(node[1])
        if node[2] == 2:
            return f"_sq({inner})"
        return f"({inner} ** {node[2]})"
    if tag == "call":
        return f"_{node[1]}({_source(node[2])})"
    _, op, left, right = node
    if op == "/":
        return f"_div({_source(left)}, {_source(right)})"
    return f"({_source(left)} {op} {_source(right)})"


def _sq(v):
    return v * v


_NAMESPACE = {"_" + k: v for k, v in _FUNCS.items()}
_NAMESPACE.update(_sq=_sq, _div=_guarded_div)


def compile_vector(exprs):
    """One callable ``(x, u) -> list of arrays`` evaluating several expressions."""
    body = ", ".join(_source(e.tree) for e in exprs)
    code = f"lambda x, u: [{body}]"
    return eval(compile(code, "<negimag-expr>", "eval"), dict(_NAMESPACE))


_SCALAR_FUNCS = {"sin": "_m.sin", "cos": "_m.cos", "tanh": "_m.tanh", "exp": "_m.exp", "abs": "abs", "sqrt": "_m.sqrt"}


def _scalar_source(node):
    """Source for plain-float evaluation with ``x`` and ``u`` as sequences."""
    tag = node[0]
    if tag == "num":
        return repr(float(node[1]))
    if tag == "var":
        return f"{node[1]}[{node[2] - 1}]"
    if tag == "neg":
        return f"(-{_scalar_source(node[1])})"
    if tag == "pow":
        return f"({_scalar_source(node[1])} ** {node[2]})"
    if tag == "call":
        return f"{_SCALAR_FUNCS[node[1]]}({_scalar_source(node[2])})"
    _, op, left, right = node
    return f"({_scalar_source(left)} {op} {_scalar_source(right)})"


def compile_scalar(exprs):
    """Callable ``(x, u) -> list of floats`` for single-point evaluation.

    Division by zero and sqrt of a negative number raise :class:`EvaluationError`.
    """
    body = ", ".join(_scalar_source(e.tree) for e in exprs)
    fn = eval(compile(f"lambda x, u: [{body}]", "<negimag-scalar>", "eval"), {"_m": math})

    def call(x, u):
        try:
            return fn(x, u)
        except ZeroDivisionError as exc:
            raise EvaluationError("division by zero") from exc
        except ValueError as exc:
            raise EvaluationError(str(exc)) from exc

    return call


def _walk(node):
    yield node
    for child in node[1:]:
        if isinstance(child, tuple):
            yield from _walk(child)


@dataclass(frozen=True, eq=False)
class Expr:
    """Parsed expression; call with state and input arrays ``(..., n_x)``, ``(..., n)``."""

    text: str
    tree: tuple

    def __post_init__(self):
        object.__setattr__(self, "_fn", _compile(self.tree))

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        try:
            val = self._fn(x, u)
        except IndexError as exc:
            raise EvaluationError(f"{self.text!r} refers to a variable outside the state/input") from exc
        return np.broadcast_to(np.asarray(val, dtype=float), np.broadcast_shapes(x.shape[:-1], u.shape[:-1]))

    def variables(self):
        return sorted({(n[1], n[2]) for n in _walk(self.tree) if n[0] == "var"})

    @property
    def uses_input(self):
        return any(kind == "u" for kind, _ in self.variables())

    @property
    def has_division(self):
        return any(n[0] == "bin" and n[1] == "/" for n in _walk(self.tree))

    def max_index(self, kind):
        idx = [i for k, i in self.variables() if k == kind]
        return max(idx) if idx else 0

    def __repr__(self):
        return f"Expr({self.text!r})"


def parse_dynamics(text):
    """Parse ``text`` into an evaluable :class:`Expr`.

    Raises :class:`ExpressionSyntaxError` (with the character offset) on
    malformed input and :class:`UnknownIdentifierError` for names outside the
    variable and function sets.
    """
    if not isinstance(text, str):
        raise ExpressionError("expression must be a string")
    return Expr(text, _Parser(text).parse())


def evaluate_scalar(expr, x, u):
    return float(expr(np.asarray(x, float), np.asarray(u, float)))

