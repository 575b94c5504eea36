"""Small arithmetic-expression language with symbolic differentiation.

Grammar (whitespace ignored)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := primary ('^' ['-' | '+'] INT | '^' '(' ['-'] INT ')')?
    primary := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x^2`` is ``-(x^2)``.  Exponents
are integer literals only.  Names ``x``, ``y``, ``z`` are state variables;
any other name is a parameter resolved at compile time.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ExprError
from .fields import ScalarField

__all__ = [
    "Const", "Var", "Param", "Neg", "BinOp", "Pow", "Call", "Expr",
    "parse", "differentiate", "to_text", "compile_expr", "evaluate",
    "parameters", "FUNCTIONS", "VARIABLES",
]

VARIABLES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Const, Var, Param, Neg, BinOp, Pow, Call]


# -- tokenizer / parser -------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = len(text[pos:]) - len(text[pos:].lstrip()) + pos
            raise ExprError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
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

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprError(f"expected {value!r}, found {found}", pos)

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected token {val!r}", pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] != "^":
            return base
        self.take()
        exponent = self._int_exponent()
        if self.peek()[1] == "^":
            raise ExprError("chained '^' needs parentheses", self.peek()[2])
        return Pow(base, exponent)

    def _int_exponent(self):
        kind, val, pos = self.peek()
        paren = val == "("
        if paren:
            self.take()
        sign = 1
        kind, val, pos = self.peek()
        if val in ("-", "+") and kind == "op":
            self.take()
            sign = -1 if val == "-" else 1
        kind, val, pos = self.take()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            raise ExprError("exponent must be an integer literal", pos)
        if paren:
            self.expect(")")
        return sign * int(val)

    def primary(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if self.peek()[1] == "(":
                if val not in FUNCTIONS:
                    raise ExprError(f"unknown function {val!r}", pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in FUNCTIONS:
                raise ExprError(f"function {val!r} needs an argument", pos)
            return Var(val) if val in VARIABLES else Param(val)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ExprError(f"unexpected {found}", pos)


def parse(text: str, params: Mapping[str, float] | None = None) -> Expr:
    """Parse ``text`` into an AST.

    When ``params`` is given, every non-variable identifier must be bound in it.
    """
    tree = _Parser(text).parse()
    if params is not None:
        missing = sorted(parameters(tree) - set(params))
        if missing:
            raise ExprError(f"unknown identifier(s): {', '.join(missing)}")
    return tree


def parameters(e: Expr) -> set:
    """Names of all parameters referenced in ``e``."""
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, (Const, Var)):
        return set()
    if isinstance(e, Neg):
        return parameters(e.operand)
    if isinstance(e, BinOp):
        return parameters(e.left) | parameters(e.right)
    if isinstance(e, Pow):
        return parameters(e.base)
    return parameters(e.arg)


# -- printing -------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _fmt_const(v):
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def to_text(e: Expr) -> str:
    """Render ``e`` with the minimum parentheses needed to re-parse it."""
    if isinstance(e, Const):
        s = _fmt_const(e.value)
        return f"({s})" if e.value < 0 else s
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Pow):
        b = to_text(e.base)
        if _prec(e.base) <= 4 or (isinstance(e.base, Const) and e.base.value < 0):
            b = f"({b})"
        return f"{b}^{e.exponent}"
    if isinstance(e, Neg):
        inner = to_text(e.operand)
        if _prec(e.operand) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[e.op]
    left = to_text(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_text(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# -- differentiation ------------------------------------------------------------

_ZERO = Const(0.0)
_ONE = Const(1.0)


def _is(e, v):
    return isinstance(e, Const) and e.value == v


def _add(a, b):
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is(a, 0.0) or _is(b, 0.0):
        return _ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(b, Const) and not isinstance(a, Const):
        a, b = b, a
    if isinstance(a, Const):
        # fold numeric factors: c1 * c2 and c1 * (c2 * e)
        if isinstance(b, Const):
            return Const(a.value * b.value)
        if isinstance(b, BinOp) and b.op == "*" and isinstance(b.left, Const):
            return _mul(Const(a.value * b.left.value), b.right)
    return BinOp("*", a, b)


def _div(a, b):
    if _is(a, 0.0):
        return _ZERO
    if _is(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a):
    if _is(a, 0.0):
        return _ZERO
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _pow(base, n):
    if n == 0:
        return _ONE
    if n == 1:
        return base
    return Pow(base, n)


def differentiate(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to ``var``."""
    if var not in VARIABLES:
        raise ExprError(f"can only differentiate with respect to x, y or z, not {var!r}")
    d = lambda s: differentiate(s, var)  # noqa: E731
    if isinstance(e, Const) or isinstance(e, Param):
        return _ZERO
    if isinstance(e, Var):
        return _ONE if e.name == var else _ZERO
    if isinstance(e, Neg):
        return _neg(d(e.operand))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        if e.op == "+":
            return _add(d(a), d(b))
        if e.op == "-":
            return _sub(d(a), d(b))
        if e.op == "*":
            return _add(_mul(d(a), b), _mul(a, d(b)))
        # quotient rule: (a'b - ab') / b^2
        return _div(_sub(_mul(d(a), b), _mul(a, d(b))), _pow(b, 2))
    if isinstance(e, Pow):
        n = e.exponent
        return _mul(_mul(Const(float(n)), _pow(e.base, n - 1)), d(e.base))
    # function call, chain rule
    u, du = e.arg, d(e.arg)
    if e.func == "sin":
        outer = Call("cos", u)
    elif e.func == "cos":
        outer = _neg(Call("sin", u))
    elif e.func == "exp":
        outer = e
    elif e.func == "ln":
        return _div(du, u)
    else:  # sqrt
        return _div(du, _mul(Const(2.0), e))
    return _mul(outer, du)


# -- evaluation -------------------------------------------------------------------

_NUMPY_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "ln": np.log, "sqrt": np.sqrt}


def _lower(e: Expr, params: Mapping[str, float]):
    """Turn ``e`` into a closure of the state vector ``u``."""
    if isinstance(e, Const):
        v = e.value
        return lambda u: v
    if isinstance(e, Var):
        i = VARIABLES.index(e.name)
        return lambda u: u[i]
    if isinstance(e, Param):
        if e.name not in params:
            raise ExprError(f"unbound parameter {e.name!r}")
        v = float(params[e.name])
        return lambda u: v
    if isinstance(e, Neg):
        f = _lower(e.operand, params)
        return lambda u: -f(u)
    if isinstance(e, Pow):
        f = _lower(e.base, params)
        n = e.exponent
        if n >= 0:
            return lambda u: f(u) ** n
        return lambda u: 1.0 / f(u) ** (-n)
    if isinstance(e, Call):
        f = _lower(e.arg, params)
        g = _NUMPY_FUNCS[e.func]
        return lambda u: g(f(u))
    a = _lower(e.left, params)
    b = _lower(e.right, params)
    if e.op == "+":
        return lambda u: a(u) + b(u)
    if e.op == "-":
        return lambda u: a(u) - b(u)
    if e.op == "*":
        return lambda u: a(u) * b(u)
    return lambda u: a(u) / b(u)


def evaluate(e: Expr, u, params: Mapping[str, float] | None = None) -> float:
    with np.errstate(all="ignore"):
        return float(_lower(e, params or {})(np.asarray(u, dtype=float)))


def compile_expr(e: Expr | str, params: Mapping[str, float] | None = None,
                 dim: int = 3) -> ScalarField:
    """Compile an expression into a :class:`ScalarField` with symbolic
    gradient and Hessian.  ``dim`` may be 2 for planar fields (x, y only)."""
    params = dict(params or {})
    text = e if isinstance(e, str) else to_text(e)
    tree = parse(e) if isinstance(e, str) else e
    names = VARIABLES[:dim]
    f = _lower(tree, params)
    partials = [differentiate(tree, v) for v in names]
    grads = [_lower(p, params) for p in partials]
    hess = [[_lower(differentiate(partials[i], names[j]), params) for j in range(dim)]
            for i in range(dim)]
    used = _variables(tree)
    if not used <= set(names):
        raise ExprError(f"expression uses {sorted(used - set(names))} but dim={dim}")

    def func(u):
        return float(f(u))

    def gradient(u):
        return np.array([float(g(u)) for g in grads])

    def hessian(u):
        return np.array([[float(h(u)) for h in row] for row in hess])

    return ScalarField(func, gradient, hessian, dim=dim,
                       domain_hint="where the expression is finite", name=text)


def _variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Const, Param)):
        return set()
    if isinstance(e, Neg):
        return _variables(e.operand)
    if isinstance(e, BinOp):
        return _variables(e.left) | _variables(e.right)
    if isinstance(e, Pow):
        return _variables(e.base)
    return _variables(e.arg)
