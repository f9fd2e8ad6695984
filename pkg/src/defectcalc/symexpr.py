"""Scalar expression language for coefficient fields on R^n.

Expressions are small immutable trees.  They can be parsed from text,
printed back, differentiated exactly, and evaluated either at a single
point or vectorized over an array of points.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' ['-'] INT)?
    atom   := NUMBER | 'pi' | COORD | FUNC '(' expr ')'
            | 'atan2' '(' expr ',' expr ')'
            | 'bump' '(' NUMBER ';' expr (',' expr)* ')'
            | 'bumpk' '(' INT ',' NUMBER ';' expr (',' expr)* ')'
            | '(' expr ')'

``COORD`` is ``x1 .. xn``; for ``n <= 3`` the aliases ``x, y, z`` name
the first coordinates.  ``FUNC`` is one of ``exp, sin, cos, sqrt``.

``bump(r; e1, ..., em)`` is the smooth compactly supported function
``exp(1 - 1/(1 - s))`` with ``s = (e1^2 + ... + em^2) / r^2`` for
``s < 1`` and ``0`` otherwise.  ``bumpk(k, r; ...)`` is the same bump
multiplied by ``(1 - s)^-k``; it is what derivatives of bumps are made
of and stays C-infinity (and zero) across ``s = 1``.
"""
from __future__ import annotations

import math
import re
from typing import Sequence

import numpy as np

__all__ = [
    "ScalarExpr",
    "ExprSyntaxError",
    "DomainError",
    "parse",
    "diff",
    "evaluate",
    "const",
    "coord",
    "coords",
    "bump",
    "exp",
    "sin",
    "cos",
    "sqrt",
    "atan2",
]

FUNCTIONS = ("exp", "sin", "cos", "sqrt")
_ALIASES = {"x": 1, "y": 2, "z": 3}


class ExprSyntaxError(ValueError):
    """Raised for malformed expression text; carries the offending position."""

    def __init__(self, message: str, text: str = "", pos: int = -1):
        self.text = text
        self.pos = pos
        if pos >= 0:
            message = f"{message} at position {pos}: {text[:pos]}>>>{text[pos:]}"
        super().__init__(message)


class DomainError(ArithmeticError):
    """Raised when evaluation hits a division by zero or sqrt of a negative."""


def _short(node: "Node", limit: int = 80) -> str:
    s = node.to_str()
    return s if len(s) <= limit else s[: limit - 3] + "..."


# ---------------------------------------------------------------------------
# AST nodes


_KEYS: dict = {}


def _intern(sig) -> int:
    k = _KEYS.get(sig)
    if k is None:
        k = _KEYS[sig] = len(_KEYS)
    return k


class Node:
    # _kid: small integer naming the node's structure; equal trees share it,
    # so one evaluation pass computes each repeated subtree once.
    __slots__ = ("_kid",)

    @property
    def kid(self) -> int:
        try:
            return self._kid
        except AttributeError:
            self._kid = _intern(self._sig())
            return self._kid

    def _sig(self) -> tuple:
        raise NotImplementedError

    def eval(self, X):
        return self.ev(X, {})

    def ev(self, X, memo: dict):
        k = self.kid
        v = memo.get(k)
        if v is None:
            v = memo[k] = self._eval(X, memo)
        return v

    def _eval(self, X, memo):
        raise NotImplementedError

    def d(self, i: int) -> "Node":
        raise NotImplementedError

    def to_str(self) -> str:
        raise NotImplementedError

    def max_coord(self) -> int:
        raise NotImplementedError


class Const(Node):
    __slots__ = ("value",)

    def _sig(self):
        return ("c", self.value)

    def __init__(self, value: float):
        self.value = float(value)

    def _eval(self, X, memo):
        return self.value

    def d(self, i):
        return ZERO

    def to_str(self):
        r = repr(self.value)
        return f"({r})" if self.value < 0 or r.startswith("-") else r

    def max_coord(self):
        return 0


ZERO = Const(0.0)
ONE = Const(1.0)


class Var(Node):
    __slots__ = ("index",)

    def _sig(self):
        return ("v", self.index)

    def __init__(self, index: int):
        self.index = index

    def _eval(self, X, memo):
        return X[self.index - 1]

    def d(self, i):
        return ONE if i == self.index else ZERO

    def to_str(self):
        return f"x{self.index}"

    def max_coord(self):
        return self.index


class Binary(Node):
    __slots__ = ("a", "b")
    symbol = "?"

    def _sig(self):
        return (self.symbol, self.a.kid, self.b.kid)

    def __init__(self, a: Node, b: Node):
        self.a = a
        self.b = b

    def to_str(self):
        return f"({self.a.to_str()} {self.symbol} {self.b.to_str()})"

    def max_coord(self):
        return max(self.a.max_coord(), self.b.max_coord())


class Add(Binary):
    __slots__ = ()
    symbol = "+"

    def _eval(self, X, memo):
        return self.a.ev(X, memo) + self.b.ev(X, memo)

    def d(self, i):
        return add(self.a.d(i), self.b.d(i))


class Sub(Binary):
    __slots__ = ()
    symbol = "-"

    def _eval(self, X, memo):
        return self.a.ev(X, memo) - self.b.ev(X, memo)

    def d(self, i):
        return sub(self.a.d(i), self.b.d(i))


class Mul(Binary):
    __slots__ = ()
    symbol = "*"

    def _eval(self, X, memo):
        return self.a.ev(X, memo) * self.b.ev(X, memo)

    def d(self, i):
        return add(mul(self.a.d(i), self.b), mul(self.a, self.b.d(i)))


class Div(Binary):
    __slots__ = ()
    symbol = "/"

    def _eval(self, X, memo):
        den = self.b.ev(X, memo)
        if np.any(np.asarray(den) == 0.0):
            raise DomainError(f"division by zero in '{_short(self)}'")
        return self.a.ev(X, memo) / den

    def d(self, i):
        da, db = self.a.d(i), self.b.d(i)
        return sub(div(da, self.b), div(mul(self.a, db), power(self.b, 2)))


class Neg(Node):
    __slots__ = ("a",)

    def _sig(self):
        return ("neg", self.a.kid)

    def __init__(self, a: Node):
        self.a = a

    def _eval(self, X, memo):
        return -self.a.ev(X, memo)

    def d(self, i):
        return neg(self.a.d(i))

    def to_str(self):
        return f"(-{self.a.to_str()})"

    def max_coord(self):
        return self.a.max_coord()


class Pow(Node):
    __slots__ = ("a", "n")

    def _sig(self):
        return ("^", self.n, self.a.kid)

    def __init__(self, a: Node, n: int):
        self.a = a
        self.n = int(n)

    def _eval(self, X, memo):
        base = self.a.ev(X, memo)
        if self.n < 0:
            if np.any(np.asarray(base) == 0.0):
                raise DomainError(f"zero to a negative power in '{_short(self)}'")
            return 1.0 / base ** (-self.n)
        return base**self.n

    def d(self, i):
        return mul(mul(Const(self.n), power(self.a, self.n - 1)), self.a.d(i))

    def to_str(self):
        return f"({self.a.to_str()})^{self.n}"

    def max_coord(self):
        return self.a.max_coord()


class Func(Node):
    __slots__ = ("name", "a")

    def _sig(self):
        return (self.name, self.a.kid)

    def __init__(self, name: str, a: Node):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        self.name = name
        self.a = a

    def _eval(self, X, memo):
        v = self.a.ev(X, memo)
        if self.name == "exp":
            return np.exp(v)
        if self.name == "sin":
            return np.sin(v)
        if self.name == "cos":
            return np.cos(v)
        if np.any(np.asarray(v) < 0.0):
            raise DomainError(f"sqrt of a negative number in '{_short(self)}'")
        return np.sqrt(v)

    def d(self, i):
        da = self.a.d(i)
        if da is ZERO:
            return ZERO
        if self.name == "exp":
            outer = self
        elif self.name == "sin":
            outer = Func("cos", self.a)
        elif self.name == "cos":
            outer = neg(Func("sin", self.a))
        else:
            outer = div(Const(0.5), self)
        return mul(outer, da)

    def to_str(self):
        return f"{self.name}({self.a.to_str()})"

    def max_coord(self):
        return self.a.max_coord()


class Atan2(Node):
    __slots__ = ("y", "x")

    def _sig(self):
        return ("atan2", self.y.kid, self.x.kid)

    def __init__(self, y: Node, x: Node):
        self.y = y
        self.x = x

    def _eval(self, X, memo):
        return np.arctan2(self.y.ev(X, memo), self.x.ev(X, memo))

    def d(self, i):
        dy, dx = self.y.d(i), self.x.d(i)
        num = sub(mul(self.x, dy), mul(self.y, dx))
        if num is ZERO:
            return ZERO
        return div(num, add(power(self.x, 2), power(self.y, 2)))

    def to_str(self):
        return f"atan2({self.y.to_str()}, {self.x.to_str()})"

    def max_coord(self):
        return max(self.y.max_coord(), self.x.max_coord())


class Bump(Node):
    """exp(1 - 1/t) * t**-k with t = 1 - sum(e_j^2)/r^2, zero where t <= 0."""

    __slots__ = ("k", "r", "args")

    def _sig(self):
        return ("bump", self.k, self.r) + tuple(e.kid for e in self.args)

    def __init__(self, r: float, args: Sequence[Node], k: int = 0):
        if not r > 0:
            raise ValueError("bump radius must be positive")
        if not args:
            raise ValueError("bump needs at least one argument")
        self.k = int(k)
        self.r = float(r)
        self.args = tuple(args)

    def _s(self, X, memo):
        # shared by every derivative order of the same bump
        key = ("s", self.r) + tuple(e.kid for e in self.args)
        s = memo.get(key)
        if s is None:
            s = 0.0
            for e in self.args:
                v = e.ev(X, memo)
                s = s + v * v
            s = memo[key] = s / (self.r * self.r)
        return s

    def _eval(self, X, memo):
        t = 1.0 - np.asarray(self._s(X, memo), dtype=float)
        inside = t > 0.0
        tt = np.where(inside, t, 1.0)
        # log form keeps exp(-1/t) * t**-k finite as t -> 0+
        val = np.exp(1.0 - 1.0 / tt - self.k * np.log(tt))
        out = np.where(inside, val, 0.0)
        return out if out.ndim else float(out)

    def d(self, i):
        ds = ZERO
        for e in self.args:
            ds = add(ds, mul(e, e.d(i)))
        if ds is ZERO:
            return ZERO
        ds = mul(Const(2.0 / (self.r * self.r)), ds)
        higher = Bump(self.r, self.args, self.k + 2)
        if self.k:
            inner = sub(mul(Const(self.k), Bump(self.r, self.args, self.k + 1)), higher)
        else:
            inner = neg(higher)
        return mul(ds, inner)

    def to_str(self):
        body = ", ".join(e.to_str() for e in self.args)
        if self.k:
            return f"bumpk({self.k}, {self.r!r}; {body})"
        return f"bump({self.r!r}; {body})"

    def max_coord(self):
        return max(e.max_coord() for e in self.args)


# smart constructors: fold constants and drop trivial terms so that
# repeated differentiation does not blow up
def _is_const(a: Node, v: float | None = None) -> bool:
    return isinstance(a, Const) and (v is None or a.value == v)


def add(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Add(a, b)


def sub(a: Node, b: Node) -> Node:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return Sub(a, b)


def mul(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Mul(a, b)


def div(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def neg(a: Node) -> Node:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def power(a: Node, n: int) -> Node:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if _is_const(a) and (n > 0 or a.value != 0.0):
        return Const(a.value**n)
    return Pow(a, n)


# ---------------------------------------------------------------------------
# public expression type


class ScalarExpr:
    """Immutable scalar field on R^dim backed by an expression tree.

    Supports the arithmetic operators with other expressions and with
    plain numbers, so fields can be built directly in Python::

        x, y = coords(2)
        f = x * y**2 + 2
    """

    __slots__ = ("node", "dim")

    def __init__(self, node: Node, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if node.max_coord() > dim:
            raise ValueError(f"expression uses x{node.max_coord()} but dim={dim}")
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "dim", int(dim))

    def __setattr__(self, name, value):
        raise AttributeError("ScalarExpr is immutable")

    # -- arithmetic
    def _lift(self, other) -> Node:
        if isinstance(other, ScalarExpr):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other.node
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Const(float(other))
        return NotImplemented

    def _wrap(self, node):
        return ScalarExpr(node, self.dim)

    def __add__(self, other):
        o = self._lift(other)
        return NotImplemented if o is NotImplemented else self._wrap(add(self.node, o))

    def __radd__(self, other):
        o = self._lift(other)
        return NotImplemented if o is NotImplemented else self._wrap(add(o, self.node))

    def __sub__(self, other):
        o = self._lift(other)
        return NotImplemented if o is NotImplemented else self._wrap(sub(self.node, o))

    def __rsub__(self, other):
        o = self._lift(other)
        return NotImplemented if o is NotImplemented else self._wrap(sub(o, self.node))

    def __mul__(self, other):
        o = self._lift(other)
        return NotImplemented if o is NotImplemented else self._wrap(mul(self.node, o))

    def __rmul__(self, other):
        o = self._lift(other)
        return NotImplemented if o is NotImplemented else self._wrap(mul(o, self.node))

    def __truediv__(self, other):
        o = self._lift(other)
        return NotImplemented if o is NotImplemented else self._wrap(div(self.node, o))

    def __rtruediv__(self, other):
        o = self._lift(other)
        return NotImplemented if o is NotImplemented else self._wrap(div(o, self.node))

    def __neg__(self):
        return self._wrap(neg(self.node))

    def __pos__(self):
        return self

    def __pow__(self, n):
        if isinstance(n, (int, np.integer)) and not isinstance(n, bool):
            return self._wrap(power(self.node, int(n)))
        raise TypeError("only integer exponents are supported")

    # -- calculus and evaluation
    def diff(self, i: int) -> "ScalarExpr":
        if not 1 <= i <= self.dim:
            raise ValueError(f"coordinate index {i} outside 1..{self.dim}")
        return self._wrap(self.node.d(i))

    def __call__(self, *point) -> float:
        if len(point) == 1 and np.ndim(point[0]) == 1:
            point = tuple(point[0])
        return evaluate(self, point)

    def eval_many(self, points) -> np.ndarray:
        """Evaluate at each row of an ``(N, dim)`` array; returns shape ``(N,)``."""
        P = np.asarray(points, dtype=float)
        if P.ndim != 2 or P.shape[1] != self.dim:
            raise ValueError(f"points must have shape (N, {self.dim})")
        X = tuple(P[:, j] for j in range(self.dim))
        with np.errstate(over="ignore", under="ignore"):
            out = self.node.eval(X)
        return np.broadcast_to(np.asarray(out, dtype=float), (P.shape[0],)).copy()

    @property
    def is_zero(self) -> bool:
        """True only for the literal constant 0 (structural, not numerical)."""
        return _is_const(self.node, 0.0)

    @property
    def constant_value(self) -> float | None:
        return self.node.value if isinstance(self.node, Const) else None

    def __str__(self):
        return self.node.to_str()

    def __repr__(self):
        return f"ScalarExpr({self.node.to_str()!r}, dim={self.dim})"


def const(value: float, dim: int) -> ScalarExpr:
    return ScalarExpr(Const(value), dim)


def coord(i: int, dim: int) -> ScalarExpr:
    if not 1 <= i <= dim:
        raise ValueError(f"coordinate index {i} outside 1..{dim}")
    return ScalarExpr(Var(i), dim)


def coords(dim: int) -> tuple[ScalarExpr, ...]:
    return tuple(coord(i, dim) for i in range(1, dim + 1))


def _lift_all(args, dim=None):
    nodes = []
    for a in args:
        if isinstance(a, ScalarExpr):
            if dim is None:
                dim = a.dim
            elif a.dim != dim:
                raise ValueError("dimension mismatch")
            nodes.append(a.node)
        else:
            nodes.append(Const(float(a)))
    if dim is None:
        raise ValueError("at least one argument must be a ScalarExpr")
    return nodes, dim


def bump(r: float, *args) -> ScalarExpr:
    nodes, dim = _lift_all(args)
    return ScalarExpr(Bump(r, nodes), dim)


def _func(name):
    def f(a: ScalarExpr) -> ScalarExpr:
        return ScalarExpr(Func(name, a.node), a.dim)

    f.__name__ = name
    return f


exp = _func("exp")
sin = _func("sin")
cos = _func("cos")
sqrt = _func("sqrt")


def atan2(y, x) -> ScalarExpr:
    (ny, nx), dim = _lift_all((y, x))
    return ScalarExpr(Atan2(ny, nx), dim)


def diff(e: ScalarExpr, i: int) -> ScalarExpr:
    """Exact partial derivative of ``e`` with respect to coordinate ``i`` (1-based)."""
    return e.diff(i)


def evaluate(e: ScalarExpr, p: Sequence[float]) -> float:
    """Evaluate ``e`` at a single point ``p``.

    Raises
    ------
    DomainError
        On division by zero or square root of a negative number; the
        message names the offending subexpression.
    """
    if len(p) != e.dim:
        raise ValueError(f"point has {len(p)} components, expected {e.dim}")
    X = tuple(np.float64(v) for v in p)
    with np.errstate(over="ignore", under="ignore"):
        return float(e.node.eval(X))


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),;]))"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError("unexpected character", text, pos)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", n))
    return toks


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(msg, self.text, tok[2])

    def expect(self, value):
        t = self.next()
        if t[1] != value or t[0] == "num":
            raise self.error(f"expected {value!r}", t)
        return t

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.next()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.next()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] == "-":
            self.next()
            return Neg(self.unary())
        if t[0] == "op" and t[1] == "+":
            self.next()
            return self.unary()
        return self.power()

    def signed_int(self):
        neg_ = False
        if self.peek()[1] == "-":
            self.next()
            neg_ = True
        t = self.next()
        if t[0] != "num" or not re.fullmatch(r"\d+", t[1]):
            raise self.error("exponent must be an integer literal", t)
        return -int(t[1]) if neg_ else int(t[1])

    def number(self):
        neg_ = False
        if self.peek()[1] == "-":
            self.next()
            neg_ = True
        t = self.next()
        if t[0] != "num":
            raise self.error("expected a number", t)
        return -float(t[1]) if neg_ else float(t[1])

    def power(self):
        node = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.next()
            node = Pow(node, self.signed_int())
            if self.peek()[1] == "^":
                raise self.error("chained '^' is not supported")
        return node

    def args(self, closing=")"):
        out = [self.expr()]
        while self.peek()[1] == ",":
            self.next()
            out.append(self.expr())
        self.expect(closing)
        return out

    def atom(self):
        t = self.next()
        kind, val, pos = t
        if kind == "num":
            return Const(float(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind != "id":
            raise self.error("unexpected token", t)
        if val == "pi":
            return Const(math.pi)
        if val in FUNCTIONS:
            self.expect("(")
            a = self.args()
            if len(a) != 1:
                raise self.error(f"{val} takes 1 argument, got {len(a)}", t)
            return Func(val, a[0])
        if val == "atan2":
            self.expect("(")
            a = self.args()
            if len(a) != 2:
                raise self.error(f"atan2 takes 2 arguments, got {len(a)}", t)
            return Atan2(a[0], a[1])
        if val in ("bump", "bumpk"):
            self.expect("(")
            k = 0
            if val == "bumpk":
                k = self.signed_int()
                self.expect(",")
            r = self.number()
            if not r > 0:
                raise self.error("bump radius must be positive", t)
            self.expect(";")
            return Bump(r, self.args(), k)
        idx = self.coordinate(val)
        if idx is None:
            raise self.error(f"unknown identifier {val!r}", t)
        return Var(idx)

    def coordinate(self, name):
        if name in _ALIASES and self.dim <= 3:
            idx = _ALIASES[name]
        else:
            m = re.fullmatch(r"x([1-9]\d*)", name)
            if not m:
                return None
            idx = int(m.group(1))
        if idx > self.dim:
            return None
        return idx


def parse(text: str, dim: int) -> ScalarExpr:
    """Parse expression text over coordinates ``x1 .. x{dim}``.

    >>> parse("x*y + 2", 2)(3, 4)
    14.0
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return ScalarExpr(_Parser(text, dim).parse(), dim)
