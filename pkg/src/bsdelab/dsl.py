"""Small arithmetic expression language for drivers and terminal values.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right-associative
    atom    := NUMBER | NAME | NAME '(' args ')' | '(' expr ')'

``**`` is accepted as a synonym for ``^``.  ``x ^ p`` is only allowed when
``p`` is a constant integer; use ``powabs(x, p)`` for fractional exponents.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Num",
    "Var",
    "Unary",
    "Binary",
    "Call",
    "Expression",
    "DSLError",
    "ParseError",
    "EvaluationError",
    "parse",
    "evaluate",
    "compile_expression",
    "CompiledExpression",
    "pretty",
    "free_variables",
    "VARIABLES",
    "FUNCTIONS",
]

VARIABLES = frozenset({"t", "y", "z", "w", "lam"})

# name -> arity
FUNCTIONS = {
    "abs": 1,
    "sgn": 1,
    "exp": 1,
    "sqrt": 1,
    "min": 2,
    "max": 2,
    "powabs": 2,
}


class DSLError(ValueError):
    pass


class ParseError(DSLError):
    """Syntax or name error with a byte offset into the source."""

    def __init__(self, message, source="", offset=0, expected=()):
        self.source = source
        self.offset = offset
        self.expected = tuple(expected)
        prefix = source.encode("utf-8")[:offset].decode("utf-8", "replace")
        self.line = prefix.count("\n") + 1
        self.col = len(prefix) - (prefix.rfind("\n") + 1) + 1
        if self.expected:
            message = f"{message} (expected {', '.join(self.expected)})"
        self.message = message
        super().__init__(f"{self.line}:{self.col}: {message}")


class EvaluationError(DSLError):
    pass


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError("literals are finite and nonnegative; use Unary('-', ...)")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # only '-'
    arg: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str  # '+', '-', '*', '/', '^'
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expression = Union[Num, Var, Unary, Binary, Call]


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", source,
                             len(source[:pos].encode("utf-8")))
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if text == "**":
                text = "^"
            tokens.append((kind, text, len(source[:pos].encode("utf-8"))))
        pos = m.end()
    tokens.append(("end", "", len(source.encode("utf-8"))))
    return tokens


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None, expected=()):
        tok = tok or self.peek()
        raise ParseError(message, self.source, tok[2], expected)

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text or tok[0] == "end":
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            self.error(f"unexpected {found}", tok, (repr(text),))
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.error(f"unexpected {tok[1]!r}", tok, ("operator", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Unary("-", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            tok = self.advance()
            exponent = self.unary()
            _check_integer_exponent(exponent, self.source, tok[2])
            return Binary("^", base, exponent)
        return base

    def atom(self):
        tok = self.peek()
        kind, text, offset = tok
        if kind == "num":
            self.advance()
            value = float(text)
            if not math.isfinite(value):
                raise ParseError(f"numeric literal {text!r} overflows", self.source, offset)
            return Num(value)
        if kind == "name":
            self.advance()
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(text, tok)
            if text in FUNCTIONS:
                self.error(f"function {text!r} used without arguments", tok, ("'('",))
            if text not in VARIABLES:
                self.error(f"unknown identifier {text!r}", tok,
                           tuple(sorted(VARIABLES)))
            return Var(text)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        self.error(f"unexpected {found}", tok, ("number", "name", "'('", "'-'"))

    def call(self, name, name_tok):
        if name not in FUNCTIONS:
            self.error(f"unknown identifier {name!r}", name_tok, tuple(sorted(FUNCTIONS)))
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            self.error(f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                       name_tok)
        return Call(name, tuple(args))


def _check_integer_exponent(exponent, source, offset):
    if free_variables(exponent):
        raise ParseError("exponent of '^' must be constant; use powabs(x, p)", source, offset)
    try:
        p = float(evaluate(exponent, {}))
    except EvaluationError as exc:
        raise ParseError(f"exponent of '^' fails to evaluate: {exc}", source, offset) from None
    if p != round(p):
        raise ParseError(
            f"non-integer exponent {p!r} in '^'; use powabs(x, p) for |x|^p", source, offset
        )


def parse(source: str) -> Expression:
    """Parse ``source`` into an expression tree, raising ParseError on failure."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return _Parser(source).parse()


# --------------------------------------------------------------------------
# pretty printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node):
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _PREC["neg"]
    return 5


def _fmt_num(value):
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def pretty(node: Expression) -> str:
    """Render ``node`` with the minimum parentheses needed to re-parse identically."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(pretty(a) for a in node.args)})"
    if isinstance(node, Unary):
        inner = pretty(node.arg)
        # '-' binds looser than '^' but tighter than '*'
        if _prec(node.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left, right = pretty(node.left), pretty(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# --------------------------------------------------------------------------
# evaluation


def free_variables(node: Expression) -> frozenset:
    if isinstance(node, Var):
        return frozenset({node.name})
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, Unary):
        return free_variables(node.arg)
    if isinstance(node, Binary):
        return free_variables(node.left) | free_variables(node.right)
    out = frozenset()
    for arg in node.args:
        out |= free_variables(arg)
    return out


def _powabs(x, p):
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        out = np.power(ax, p)
    # powabs(0, p) = 0 for p > 0
    return np.where((ax == 0) & (np.asarray(p) > 0), 0.0, out)


_UNARY_FUNCS = {
    "abs": np.abs,
    "sgn": np.sign,
    "exp": np.exp,
    "sqrt": np.sqrt,
}


def compile_expression(e: Expression):
    """Turn ``e`` into a closure ``f(env)``; same semantics as ``evaluate`` minus the
    finiteness check, without re-walking the tree on every call."""
    if isinstance(e, Num):
        v = e.value
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise EvaluationError(f"unbound variable {name!r}") from None
        return var
    if isinstance(e, Unary):
        f = compile_expression(e.arg)
        return lambda env: -f(env)
    if isinstance(e, Binary):
        a, b = compile_expression(e.left), compile_expression(e.right)
        if e.op == "+":
            return lambda env: a(env) + b(env)
        if e.op == "-":
            return lambda env: a(env) - b(env)
        if e.op == "*":
            return lambda env: a(env) * b(env)
        op = e.op
        return lambda env: _binary_slow(op, a(env), b(env))
    fs = [compile_expression(x) for x in e.args]
    if e.name in _UNARY_FUNCS and e.name != "sqrt":
        fn = _UNARY_FUNCS[e.name]
        return lambda env: fn(fs[0](env))
    if e.name == "min":
        return lambda env: np.minimum(fs[0](env), fs[1](env))
    if e.name == "max":
        return lambda env: np.maximum(fs[0](env), fs[1](env))
    return lambda env: _call_slow(e.name, [f(env) for f in fs])


def _binary_slow(op, a, b):
    if op == "/":
        if np.any(np.asarray(b) == 0):
            raise EvaluationError("division by zero")
        return a / b
    if np.any((np.asarray(a) == 0) & (np.asarray(b) < 0)):
        raise EvaluationError("division by zero in negative power")
    return np.power(np.asarray(a, dtype=float), b)


def _call_slow(name, args):
    if name == "sqrt":
        if np.any(np.asarray(args[0]) < 0):
            raise EvaluationError("sqrt of a negative number")
        return np.sqrt(args[0])
    mask = (np.asarray(args[0]) == 0) & (np.asarray(args[1]) < 0)
    if np.any(mask):
        raise EvaluationError("powabs(0, p) with p < 0")
    return _powabs(args[0], args[1])


def _finish(out):
    arr = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError("non-finite result (overflow or invalid operation)")
    if arr.ndim == 0:
        return float(arr)
    return arr


def evaluate(e: Expression, env: Mapping[str, object]):
    """Evaluate ``e`` with variables bound by ``env``.

    Values in ``env`` may be floats or numpy arrays (broadcast together); the
    result has the broadcast shape, or is a float when every input is scalar.
    Non-finite results raise EvaluationError.
    """
    if isinstance(e, str):
        e = parse(e)
    return CompiledExpression(e)(env)


class CompiledExpression:
    """Reusable evaluator for one expression; results match ``evaluate``."""

    def __init__(self, e: Expression):
        self.expr = e
        self._f = compile_expression(e)

    def __call__(self, env):
        with np.errstate(all="ignore"):
            out = self._f(env)
        return _finish(out)
