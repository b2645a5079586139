"""Scalar expressions over x1..xn with forward-mode derivatives.

Expressions are parsed from text into an immutable tree. Values come from a
plain float walk; derivatives come from walking the same tree with
:class:`Dual` numbers, one coordinate direction per pass.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' factor)?
    base   := number | 'x'digits | name '(' expr ')' | '(' expr ')'

so ``^`` binds tighter than unary minus (``-x1^2 == -(x1^2)``) and is
right-associative (``2^3^2 == 2^9``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "Dual", "Expr", "Const", "Var", "Neg", "BinOp", "Call",
    "ExprError", "ExprSyntaxError", "ExprDomainError",
    "FUNCTIONS", "parse", "evaluate", "grad", "jacobian", "to_text",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    """Malformed expression text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of a partial function."""


class Dual:
    """Dual number ``val + der*eps`` with ``eps**2 == 0``."""

    __slots__ = ("val", "der")

    def __init__(self, val, der=0.0):
        self.val = float(val)
        self.der = float(der)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.der!r})"

    @staticmethod
    def _lift(other):
        return other if isinstance(other, Dual) else Dual(other)

    def __add__(self, other):
        o = Dual._lift(other)
        return Dual(self.val + o.val, self.der + o.der)

    __radd__ = __add__

    def __sub__(self, other):
        o = Dual._lift(other)
        return Dual(self.val - o.val, self.der - o.der)

    def __rsub__(self, other):
        return Dual._lift(other) - self

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __mul__(self, other):
        o = Dual._lift(other)
        return Dual(self.val * o.val, self.der * o.val + self.val * o.der)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual._lift(other)
        if o.val == 0.0:
            raise ExprDomainError("division by zero")
        q = self.val / o.val
        return Dual(q, (self.der - q * o.der) / o.val)

    def __rtruediv__(self, other):
        return Dual._lift(other) / self

    def powc(self, p):
        """Power with a constant exponent ``p``."""
        a = self.val
        if a < 0.0 and not float(p).is_integer():
            raise ExprDomainError(f"negative base {a!r} with non-integer exponent {p!r}")
        if a == 0.0 and p < 1.0 and p != 0.0:
            raise ExprDomainError(f"zero base with exponent {p!r}")
        if p == 0.0:
            return Dual(1.0, 0.0)
        try:
            v = a ** p
            d = p * a ** (p - 1.0) * self.der
        except OverflowError as exc:
            raise ExprDomainError(str(exc)) from None
        return Dual(v, d)

    def powd(self, e):
        """Power with a variable exponent; requires a positive base."""
        if self.val <= 0.0:
            raise ExprDomainError(f"non-positive base {self.val!r} with variable exponent")
        la = math.log(self.val)
        return (e * Dual(la, self.der / self.val)).exp()

    def sin(self):
        return Dual(math.sin(self.val), math.cos(self.val) * self.der)

    def cos(self):
        return Dual(math.cos(self.val), -math.sin(self.val) * self.der)

    def exp(self):
        try:
            v = math.exp(self.val)
        except OverflowError:
            raise ExprDomainError(f"exp overflow at {self.val!r}") from None
        return Dual(v, v * self.der)

    def log(self):
        if self.val <= 0.0:
            raise ExprDomainError(f"log of non-positive value {self.val!r}")
        return Dual(math.log(self.val), self.der / self.val)

    def sqrt(self):
        if self.val <= 0.0:
            # sqrt(0) has no finite derivative
            raise ExprDomainError(f"sqrt not differentiable at {self.val!r}")
        r = math.sqrt(self.val)
        return Dual(r, 0.5 * self.der / r)


# ---------------------------------------------------------------------------
# tree


class Expr:
    """Base class of expression nodes. Nodes are immutable and hashable."""

    __slots__ = ()

    def value(self, x):
        raise NotImplementedError

    def dual(self, x, i):
        """Evaluate with dual numbers seeded along coordinate ``i`` (0-based)."""
        raise NotImplementedError

    def max_index(self):
        return 0

    def has_vars(self):
        return self.max_index() > 0

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Const(Expr):
    v: float

    def value(self, x):
        return self.v

    def dual(self, x, i):
        return Dual(self.v, 0.0)


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based, as written

    def value(self, x):
        return float(x[self.index - 1])

    def dual(self, x, i):
        return Dual(x[self.index - 1], 1.0 if self.index - 1 == i else 0.0)

    def max_index(self):
        return self.index


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def value(self, x):
        return -self.arg.value(x)

    def dual(self, x, i):
        return -self.arg.dual(x, i)

    @cached_property
    def _max_index(self):
        return self.arg.max_index()

    def max_index(self):
        return self._max_index


def _fpow(a, b, const_exponent):
    if const_exponent:
        if a < 0.0 and not float(b).is_integer():
            raise ExprDomainError(f"negative base {a!r} with non-integer exponent {b!r}")
        if a == 0.0 and b < 0.0:
            raise ExprDomainError("zero base with negative exponent")
    elif a <= 0.0:
        raise ExprDomainError(f"non-positive base {a!r} with variable exponent")
    try:
        return a ** b
    except OverflowError as exc:
        raise ExprDomainError(str(exc)) from None


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def value(self, x):
        a = self.left.value(x)
        b = self.right.value(x)
        op = self.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0.0:
                raise ExprDomainError("division by zero")
            return a / b
        return _fpow(a, b, not self.right.has_vars())

    def dual(self, x, i):
        a = self.left.dual(x, i)
        op = self.op
        if op == "^":
            if self.right.has_vars():
                return a.powd(self.right.dual(x, i))
            return a.powc(self.right.value(x))
        b = self.right.dual(x, i)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        return a / b

    @cached_property
    def _max_index(self):
        return max(self.left.max_index(), self.right.max_index())

    def max_index(self):
        return self._max_index


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr

    def value(self, x):
        a = self.arg.value(x)
        fn = self.fn
        if fn == "sin":
            return math.sin(a)
        if fn == "cos":
            return math.cos(a)
        if fn == "exp":
            try:
                return math.exp(a)
            except OverflowError:
                raise ExprDomainError(f"exp overflow at {a!r}") from None
        if fn == "log":
            if a <= 0.0:
                raise ExprDomainError(f"log of non-positive value {a!r}")
            return math.log(a)
        if a < 0.0:
            raise ExprDomainError(f"sqrt of negative value {a!r}")
        return math.sqrt(a)

    def dual(self, x, i):
        return getattr(self.arg.dual(x, i), self.fn)()

    @cached_property
    def _max_index(self):
        return self.arg.max_index()

    def max_index(self):
        return self._max_index


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)
_VAR = re.compile(r"x(\d+)\Z")


def _tokenize(text):
    tokens = []
    pos = 0
    end = len(text)
    while pos < end:
        m = _TOKEN.match(text, pos)
        if m is None or m.lastgroup is None:
            # skip whitespace to point at the offending character
            stripped = len(text) - len(text[pos:].lstrip())
            if stripped >= end:
                break
            raise ExprSyntaxError(f"unexpected character {text[stripped]!r}", stripped)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, n):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, sym):
        kind, val, off = self.take()
        if kind != "op" or val != sym:
            what = "end of input" if kind == "eof" else repr(val)
            raise ExprSyntaxError(f"expected {sym!r}, found {what}", off)

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.factor())
        node = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            node = BinOp("^", node, self.factor())
        return node

    def base(self):
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            m = _VAR.match(val)
            if m:
                idx = int(m.group(1))
                if idx < 1:
                    raise ExprSyntaxError(f"variable {val!r}: indices start at 1", off)
                if idx > self.n:
                    raise ExprSyntaxError(
                        f"variable {val!r} exceeds declared dimension {self.n}", off)
                return Var(idx)
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise ExprSyntaxError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "eof" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", off)


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` into an expression over variables ``x1..xn``."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    p = _Parser(text, n)
    node = p.expr()
    kind, val, off = p.peek()
    if kind != "eof":
        raise ExprSyntaxError(f"unexpected {val!r}", off)
    return node


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def to_text(e: Expr) -> str:
    """Render ``e`` so that ``parse(to_text(e))`` rebuilds the same tree."""
    if isinstance(e, Const):
        return repr(e.v)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    return f"({to_text(e.left)} {e.op} {to_text(e.right)})"


# ---------------------------------------------------------------------------
# evaluation


def _point(e, x):
    x = np.asarray(x, dtype=float).ravel()
    if e.max_index() > x.size:
        raise ValueError(f"expression uses x{e.max_index()} but point has dimension {x.size}")
    return x


def evaluate(e: Expr, x) -> float:
    x = _point(e, x)
    try:
        return e.value(x)
    except ZeroDivisionError as exc:
        raise ExprDomainError(str(exc)) from None


def grad(e: Expr, x) -> np.ndarray:
    """Gradient by ``len(x)`` forward passes, one per coordinate direction."""
    x = _point(e, x)
    g = np.empty(x.size)
    for i in range(x.size):
        g[i] = e.dual(x, i).der
    return g


def value_and_grad(e: Expr, x):
    x = _point(e, x)
    if x.size == 0:
        return e.value(x), np.empty(0)
    g = np.empty(x.size)
    v = 0.0
    for i in range(x.size):
        d = e.dual(x, i)
        g[i] = d.der
        v = d.val
    return v, g


def jacobian(es: Sequence[Expr], x) -> np.ndarray:
    """Stack the gradients of ``es`` into an ``m x n`` matrix."""
    x = np.asarray(x, dtype=float).ravel()
    J = np.zeros((len(es), x.size))
    for r, e in enumerate(es):
        J[r] = grad(e, x)
    return J
