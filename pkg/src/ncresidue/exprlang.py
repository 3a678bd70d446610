"""A small expression language for warp functions and metric entries.

Grammar (standard precedence, ``^`` binds tightest and is right-associative)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' factor)?
    base   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' factor

Exponents must be constant.  Evaluation is vectorized: variables may be bound to
floats or numpy arrays of a common shape.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import (
    DomainError,
    NonDifferentiable,
    ParseError,
    UnboundVariable,
    UnknownFunction,
    UnknownVariable,
)

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Const:
    value: float
    label: str | None = None


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Ast"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Ast"
    right: "Ast"


Ast = Union[Const, Var, Unary, Binary]

ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            stripped = len(src[pos:]) - len(src[pos:].lstrip())
            raise ParseError(f"unexpected character {src[pos + stripped]!r}", pos + stripped,
                             ("number", "identifier", "operator"))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.peek()
        if text != value or kind != "op":
            raise ParseError(f"unexpected {text or 'end of input'!r}", pos, (repr(value),))
        self.take()

    def parse(self) -> Ast:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", pos, ("'+'", "'-'", "'*'", "'/'", "'^'", "end of input"))
        return node

    def expr(self) -> Ast:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Ast:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Ast:
        node = self.base()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.take()
            exponent = self.factor()
            if free_variables(exponent):
                raise ParseError("exponent must be constant", pos + 1, ("constant exponent",))
            node = Binary("^", node, Const(float(evaluate(exponent, {}))))
        return node

    def base(self) -> Ast:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownFunction(f"unknown function {text!r}", pos, FUNCTIONS)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text in FUNCTIONS:
                raise ParseError(f"function {text!r} needs an argument", pos + len(text), ("'('",))
            if text in CONSTANTS:
                return Const(CONSTANTS[text], text)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "op" and text == "-":
            return Unary("neg", self.factor())
        raise ParseError(f"unexpected {text or 'end of input'!r}", pos,
                         ("number", "identifier", "'('", "'-'"))


def parse(src: str) -> Ast:
    """Parse ``src`` into an AST; raises :class:`ParseError` on bad input."""
    if not src or not src.strip():
        raise ParseError("empty expression", 0, ("expression",))
    return _Parser(src).parse()


def free_variables(a: Ast) -> frozenset[str]:
    if isinstance(a, Var):
        return frozenset([a.name])
    if isinstance(a, Unary):
        return free_variables(a.arg)
    if isinstance(a, Binary):
        return free_variables(a.left) | free_variables(a.right)
    return frozenset()


def bind(a: Ast, variables) -> Ast:
    """Check that ``a`` only uses declared variables."""
    unknown = sorted(free_variables(a) - set(variables))
    if unknown:
        raise UnknownVariable(f"undeclared variable(s): {', '.join(unknown)}")
    return a


# ---------------------------------------------------------------------------
# evaluation

def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise DomainError(f"non-finite result in {what}")
    return value


def evaluate(a: Ast, env: Mapping[str, object]):
    """Evaluate ``a`` with variables bound in ``env`` (floats or arrays)."""
    if isinstance(a, Const):
        return a.value
    if isinstance(a, Var):
        try:
            return env[a.name]
        except KeyError:
            raise UnboundVariable(f"variable {a.name!r} is not bound") from None
    if isinstance(a, Unary):
        x = evaluate(a.arg, env)
        if a.op == "neg":
            return -x
        if a.op == "sin":
            return np.sin(x)
        if a.op == "cos":
            return np.cos(x)
        if a.op == "exp":
            with np.errstate(over="ignore"):
                return _check_finite(np.exp(x), "exp")
        if a.op == "log":
            if np.any(np.asarray(x) <= 0):
                raise DomainError("log of non-positive value")
            return np.log(x)
        if a.op == "sqrt":
            if np.any(np.asarray(x) < 0):
                raise DomainError("sqrt of negative value")
            return np.sqrt(x)
        raise UnknownFunction(f"unknown function {a.op!r}", 0)
    left = evaluate(a.left, env)
    right = evaluate(a.right, env)
    if a.op == "+":
        return left + right
    if a.op == "-":
        return left - right
    if a.op == "*":
        return left * right
    if a.op == "/":
        if np.any(np.asarray(right) == 0):
            raise DomainError("division by zero")
        return left / right
    if a.op == "^":
        p = right
        if float(p) != int(p) and np.any(np.asarray(left) < 0):
            raise DomainError("non-integer power of negative value")
        if p < 0 and np.any(np.asarray(left) == 0):
            raise DomainError("negative power of zero")
        return _check_finite(np.power(left, int(p) if float(p) == int(p) else p), "^")
    raise ValueError(f"bad operator {a.op!r}")


# ---------------------------------------------------------------------------
# symbolic differentiation

def _is_const(a, value=None):
    return isinstance(a, Const) and (value is None or a.value == value)


def _add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Binary("+", a, b)


def _sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return Binary("-", a, b)


def _neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def _mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Binary("*", a, b)


def _div(a, b):
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Binary("/", a, b)


def _pow(a, p: float):
    if p == 0.0:
        return ONE
    if p == 1.0:
        return a
    return Binary("^", a, Const(p))


def differentiate(a: Ast, var: str) -> Ast:
    """Exact derivative of ``a`` with respect to ``var``, lightly simplified."""
    if isinstance(a, Const):
        return ZERO
    if isinstance(a, Var):
        return ONE if a.name == var else ZERO
    if isinstance(a, Unary):
        u = a.arg
        du = differentiate(u, var)
        if _is_const(du, 0.0):
            return ZERO
        if a.op == "neg":
            return _neg(du)
        if a.op == "sin":
            return _mul(Unary("cos", u), du)
        if a.op == "cos":
            return _neg(_mul(Unary("sin", u), du))
        if a.op == "exp":
            return _mul(a, du)
        if a.op == "log":
            return _div(du, u)
        if a.op == "sqrt":
            return _div(du, _mul(Const(2.0), a))
        raise NonDifferentiable(f"no derivative rule for {a.op!r}")
    left, right = a.left, a.right
    if a.op == "^":
        dl = differentiate(left, var)
        p = right.value
        return _mul(_mul(Const(p), _pow(left, p - 1.0)), dl)
    dl = differentiate(left, var)
    dr = differentiate(right, var)
    if a.op == "+":
        return _add(dl, dr)
    if a.op == "-":
        return _sub(dl, dr)
    if a.op == "*":
        return _add(_mul(dl, right), _mul(left, dr))
    if a.op == "/":
        if _is_const(dr, 0.0):
            return _div(dl, right)
        return _div(_sub(_mul(dl, right), _mul(left, dr)), _pow(right, 2.0))
    raise NonDifferentiable(f"no derivative rule for {a.op!r}")


def simplify(a: Ast) -> Ast:
    """Constant folding plus the 0/1 identities used by :func:`differentiate`."""
    if isinstance(a, Unary):
        arg = simplify(a.arg)
        if a.op == "neg":
            return _neg(arg)
        if _is_const(arg):
            return Const(float(evaluate(Unary(a.op, arg), {})))
        return Unary(a.op, arg)
    if isinstance(a, Binary):
        left, right = simplify(a.left), simplify(a.right)
        if a.op == "+":
            return _add(left, right)
        if a.op == "-":
            return _sub(left, right)
        if a.op == "*":
            return _mul(left, right)
        if a.op == "/":
            if _is_const(left) and _is_const(right) and right.value != 0:
                return Const(left.value / right.value)
            return _div(left, right)
        if _is_const(left):
            return Const(float(evaluate(Binary("^", left, right), {})))
        return _pow(left, right.value)
    return a


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_const(c: Const) -> str:
    if c.label:
        return c.label
    text = repr(float(c.value))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def to_string(a: Ast) -> str:
    """Render ``a`` so that ``parse(to_string(a))`` evaluates identically."""
    if isinstance(a, Const):
        text = _fmt_const(a)
        return f"({text})" if a.value < 0 else text
    if isinstance(a, Var):
        return a.name
    if isinstance(a, Unary):
        if a.op == "neg":
            inner = to_string(a.arg)
            if isinstance(a.arg, Binary) and _PREC[a.arg.op] < _PREC["^"]:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{a.op}({to_string(a.arg)})"
    prec = _PREC[a.op]
    left, right = to_string(a.left), to_string(a.right)
    if a.op == "^":
        if isinstance(a.left, (Binary, Unary)) and not (
            isinstance(a.left, Unary) and a.left.op != "neg"
        ):
            left = f"({left})"
        return f"{left}^{right}"
    if isinstance(a.left, Binary) and _PREC[a.left.op] < prec:
        left = f"({left})"
    if isinstance(a.right, Binary) and _PREC[a.right.op] <= prec:
        right = f"({right})"
    elif isinstance(a.right, Unary) and a.right.op == "neg":
        right = f"({right})"
    return f"{left} {a.op} {right}"


class Expression:
    """A parsed expression bound to a list of variable names.

    Derivatives are produced symbolically on demand and cached.
    """

    def __init__(self, source: str | float | Ast, variables):
        self.variables = tuple(variables)
        if isinstance(source, (int, float)):
            self.ast: Ast = Const(float(source))
        elif isinstance(source, str):
            self.ast = bind(parse(source), self.variables)
        else:
            self.ast = bind(source, self.variables)
        self._derivs: dict[tuple[str, ...], Ast] = {(): self.ast}

    @property
    def source(self) -> str:
        return to_string(self.ast)

    def is_constant(self) -> bool:
        return not free_variables(self.ast)

    def derivative_ast(self, *names: str) -> Ast:
        key = tuple(sorted(names))
        if key not in self._derivs:
            parent = self.derivative_ast(*key[:-1])
            self._derivs[key] = differentiate(parent, key[-1])
        return self._derivs[key]

    def __call__(self, x, *derivs: int):
        """Evaluate at points ``x`` of shape (..., k); ``derivs`` are 0-based axes."""
        x = np.asarray(x, dtype=float)
        env = {name: x[..., i] for i, name in enumerate(self.variables)}
        ast = self.derivative_ast(*(self.variables[i] for i in derivs))
        value = evaluate(ast, env)
        return np.broadcast_to(np.asarray(value, dtype=float), x.shape[:-1]).copy()

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([self(x, i) for i in range(len(self.variables))], axis=-1)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        k = len(self.variables)
        rows = [np.stack([self(x, i, j) for j in range(k)], axis=-1) for i in range(k)]
        return np.stack(rows, axis=-2)

    def __repr__(self):
        return f"Expression({self.source!r}, variables={self.variables})"
