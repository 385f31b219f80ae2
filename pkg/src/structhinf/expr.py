"""Scalar basis expressions over a named parameter vector.

Expressions are built from literals, parameters, the four arithmetic
operations, unary minus, integer powers, and the functions sin, cos and
exp.  They support exact evaluation, exact symbolic differentiation,
syntactic dependency analysis, and outward-rounded interval evaluation
used to certify that an expression (in particular every division) is
well defined over a parameter box.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParseError

__all__ = ["Expr", "BasisSet", "Interval", "parse_expr"]


# ---------------------------------------------------------------------------
# outward-rounded interval arithmetic

def _down(x: float) -> float:
    return math.nextafter(x, -math.inf)


def _up(x: float) -> float:
    return math.nextafter(x, math.inf)


@dataclass(frozen=True)
class Interval:
    """Closed interval with outward-rounded endpoints."""

    lo: float
    hi: float

    def contains_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo + other.lo), _up(self.hi + other.hi))

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo - other.hi), _up(self.hi - other.lo))

    def __mul__(self, other: "Interval") -> "Interval":
        prods = (self.lo * other.lo, self.lo * other.hi,
                 self.hi * other.lo, self.hi * other.hi)
        return Interval(_down(min(prods)), _up(max(prods)))

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def reciprocal(self) -> "Interval":
        if self.contains_zero():
            raise DomainError("interval contains zero")
        vals = (1.0 / self.lo, 1.0 / self.hi)
        return Interval(_down(min(vals)), _up(max(vals)))

    def int_pow(self, n: int) -> "Interval":
        if n < 0:
            return self.reciprocal().int_pow(-n)
        if n == 0:
            return Interval(1.0, 1.0)
        lo_n, hi_n = self.lo ** n, self.hi ** n
        if n % 2 == 1:
            return Interval(_down(lo_n), _up(hi_n))
        if self.contains_zero():
            return Interval(0.0, _up(max(lo_n, hi_n)))
        return Interval(_down(min(lo_n, hi_n)), _up(max(lo_n, hi_n)))

    def exp(self) -> "Interval":
        return Interval(_down(math.exp(self.lo)), _up(math.exp(self.hi)))

    def _trig(self, fn, max_center: float) -> "Interval":
        # fn has maxima at max_center + 2*k*pi, minima half a period away.
        if self.hi - self.lo >= 2.0 * math.pi:
            return Interval(-1.0, 1.0)
        vals = sorted((fn(self.lo), fn(self.hi)))
        lo, hi = _down(vals[0]), _up(vals[1])
        # A one-ulp slack keeps the critical-point test conservative.
        eps = 1e-9
        two_pi = 2.0 * math.pi
        k_lo = math.ceil((self.lo - max_center) / two_pi - eps)
        k_hi = math.floor((self.hi - max_center) / two_pi + eps)
        if k_lo <= k_hi:
            hi = 1.0
        min_center = max_center + math.pi
        k_lo = math.ceil((self.lo - min_center) / two_pi - eps)
        k_hi = math.floor((self.hi - min_center) / two_pi + eps)
        if k_lo <= k_hi:
            lo = -1.0
        return Interval(max(lo, -1.0), min(hi, 1.0))

    def sin(self) -> "Interval":
        return self._trig(math.sin, math.pi / 2.0)

    def cos(self) -> "Interval":
        return self._trig(math.cos, 0.0)


# ---------------------------------------------------------------------------
# expression nodes

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class Expr:
    """Base class for expression nodes."""

    __slots__ = ("pos",)
    prec = _PREC_ATOM

    def value(self, alpha) -> float:
        raise NotImplementedError

    def deriv(self, i: int) -> "Expr":
        raise NotImplementedError

    @property
    def deps(self) -> frozenset:
        raise NotImplementedError

    def interval(self, lo, hi) -> Interval:
        raise NotImplementedError

    def _wrap(self, child: "Expr", min_prec: int) -> str:
        s = str(child)
        return f"({s})" if child.prec < min_prec else s


class Num(Expr):
    __slots__ = ("v",)

    def __init__(self, v: float, pos: int = -1):
        self.v = float(v)
        self.pos = pos

    @property
    def prec(self):  # negative literals print with a leading minus
        return _PREC_ATOM if self.v >= 0 else _PREC_NEG

    def value(self, alpha):
        return self.v

    def deriv(self, i):
        return Num(0.0)

    @property
    def deps(self):
        return frozenset()

    def interval(self, lo, hi):
        return Interval(self.v, self.v)

    def __str__(self):
        if self.v.is_integer() and abs(self.v) < 1e16:
            return str(int(self.v))
        return repr(self.v)


class Param(Expr):
    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str, pos: int = -1):
        self.index = index
        self.name = name
        self.pos = pos

    def value(self, alpha):
        return float(alpha[self.index])

    def deriv(self, i):
        return Num(1.0) if i == self.index else Num(0.0)

    @property
    def deps(self):
        return frozenset((self.index,))

    def interval(self, lo, hi):
        return Interval(float(lo[self.index]), float(hi[self.index]))

    def __str__(self):
        return self.name


class _Binary(Expr):
    __slots__ = ("a", "b", "_deps")

    def __init__(self, a: Expr, b: Expr, pos: int = -1):
        self.a = a
        self.b = b
        self.pos = pos
        self._deps = a.deps | b.deps

    @property
    def deps(self):
        return self._deps


class Add(_Binary):
    __slots__ = ()
    prec = _PREC_ADD

    def value(self, alpha):
        return self.a.value(alpha) + self.b.value(alpha)

    def deriv(self, i):
        return _add(self.a.deriv(i), self.b.deriv(i))

    def interval(self, lo, hi):
        return self.a.interval(lo, hi) + self.b.interval(lo, hi)

    def __str__(self):
        return f"{self._wrap(self.a, _PREC_ADD)} + {self._wrap(self.b, _PREC_ADD)}"


class Sub(_Binary):
    __slots__ = ()
    prec = _PREC_ADD

    def value(self, alpha):
        return self.a.value(alpha) - self.b.value(alpha)

    def deriv(self, i):
        return _sub(self.a.deriv(i), self.b.deriv(i))

    def interval(self, lo, hi):
        return self.a.interval(lo, hi) - self.b.interval(lo, hi)

    def __str__(self):
        return f"{self._wrap(self.a, _PREC_ADD)} - {self._wrap(self.b, _PREC_ADD + 1)}"


class Mul(_Binary):
    __slots__ = ()
    prec = _PREC_MUL

    def value(self, alpha):
        return self.a.value(alpha) * self.b.value(alpha)

    def deriv(self, i):
        return _add(_mul(self.a.deriv(i), self.b), _mul(self.a, self.b.deriv(i)))

    def interval(self, lo, hi):
        return self.a.interval(lo, hi) * self.b.interval(lo, hi)

    def __str__(self):
        return f"{self._wrap(self.a, _PREC_MUL)} * {self._wrap(self.b, _PREC_MUL)}"


class Div(_Binary):
    __slots__ = ()
    prec = _PREC_MUL

    def value(self, alpha):
        return self.a.value(alpha) / self.b.value(alpha)

    def deriv(self, i):
        num = _sub(_mul(self.a.deriv(i), self.b), _mul(self.a, self.b.deriv(i)))
        return _div(num, _pow(self.b, 2))

    def interval(self, lo, hi):
        denom = self.b.interval(lo, hi)
        if denom.contains_zero():
            raise DomainError(
                f"denominator {self.b} may vanish on the parameter box "
                f"(range [{denom.lo:g}, {denom.hi:g}])")
        return self.a.interval(lo, hi) * denom.reciprocal()

    def __str__(self):
        return f"{self._wrap(self.a, _PREC_MUL)} / {self._wrap(self.b, _PREC_MUL + 1)}"


class Neg(Expr):
    __slots__ = ("a",)
    prec = _PREC_NEG

    def __init__(self, a: Expr, pos: int = -1):
        self.a = a
        self.pos = pos

    def value(self, alpha):
        return -self.a.value(alpha)

    def deriv(self, i):
        return _neg(self.a.deriv(i))

    @property
    def deps(self):
        return self.a.deps

    def interval(self, lo, hi):
        return -self.a.interval(lo, hi)

    def __str__(self):
        return f"-{self._wrap(self.a, _PREC_POW)}"


class Pow(Expr):
    __slots__ = ("a", "n")
    prec = _PREC_POW

    def __init__(self, a: Expr, n: int, pos: int = -1):
        self.a = a
        self.n = int(n)
        self.pos = pos

    def value(self, alpha):
        return self.a.value(alpha) ** self.n

    def deriv(self, i):
        da = self.a.deriv(i)
        return _mul(_mul(Num(float(self.n)), _pow(self.a, self.n - 1)), da)

    @property
    def deps(self):
        return self.a.deps

    def interval(self, lo, hi):
        base = self.a.interval(lo, hi)
        if self.n < 0 and base.contains_zero():
            raise DomainError(
                f"base {self.a} of negative power may vanish on the parameter box")
        return base.int_pow(self.n)

    def __str__(self):
        return f"{self._wrap(self.a, _PREC_ATOM)}^{self.n}"


_FUNCTIONS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


class Fun(Expr):
    __slots__ = ("name", "a")

    def __init__(self, name: str, a: Expr, pos: int = -1):
        self.name = name
        self.a = a
        self.pos = pos

    def value(self, alpha):
        return _FUNCTIONS[self.name](self.a.value(alpha))

    def deriv(self, i):
        da = self.a.deriv(i)
        if self.name == "sin":
            return _mul(Fun("cos", self.a), da)
        if self.name == "cos":
            return _neg(_mul(Fun("sin", self.a), da))
        return _mul(Fun("exp", self.a), da)

    @property
    def deps(self):
        return self.a.deps

    def interval(self, lo, hi):
        arg = self.a.interval(lo, hi)
        return getattr(arg, self.name)()

    def __str__(self):
        return f"{self.name}({self.a})"


# ---------------------------------------------------------------------------
# constant-folding constructors used by differentiation

def _is_num(e: Expr, v=None) -> bool:
    return isinstance(e, Num) and (v is None or e.v == v)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.v + b.v)
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.v - b.v)
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.v * b.v)
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return Div(a, b)


def _neg(a: Expr) -> Expr:
    if _is_num(a):
        return Num(-a.v)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def _pow(a: Expr, n: int) -> Expr:
    if n == 0:
        return Num(1.0)
    if n == 1:
        return a
    return Pow(a, n)


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
  | (?P<ws>\s+)
""", re.VERBOSE)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", source, pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, params):
        self.source = source
        self.tokens = _tokenize(source)
        self.k = 0
        self.index = {name: i for i, name in enumerate(params)}

    def peek(self):
        return self.tokens[self.k]

    def next(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, text: str):
        kind, val, pos = self.next()
        if val != text:
            raise ParseError(f"expected {text!r}, found {val or 'end of input'!r}",
                             self.source, pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {val!r}", self.source, pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, pos = self.next()
            rhs = self.term()
            e = Add(e, rhs, pos) if op == "+" else Sub(e, rhs, pos)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/"):
            _, op, pos = self.next()
            rhs = self.factor()
            e = Mul(e, rhs, pos) if op == "*" else Div(e, rhs, pos)
        return e

    def factor(self) -> Expr:
        kind, val, pos = self.peek()
        if val == "-":
            self.next()
            return Neg(self.factor(), pos)
        if val == "+":
            self.next()
            return self.factor()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            _, _, pos = self.next()
            sign = 1
            if self.peek()[1] == "-":
                self.next()
                sign = -1
            kind, val, npos = self.next()
            if kind != "num" or not re.fullmatch(r"\d+", val):
                raise ParseError("exponent must be an integer literal",
                                 self.source, npos)
            return Pow(base, sign * int(val), pos)
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.next()
        if kind == "num":
            return Num(float(val), pos)
        if kind == "ident":
            if self.peek()[1] == "(":
                if val not in _FUNCTIONS:
                    raise ParseError(f"unsupported function {val!r}", self.source, pos)
                self.next()
                arg = self.expr()
                self.expect(")")
                return Fun(val, arg, pos)
            if val not in self.index:
                raise ParseError(f"unknown identifier {val!r}", self.source, pos)
            return Param(self.index[val], val, pos)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected token {val or 'end of input'!r}",
                         self.source, pos)


def parse_expr(source: str, params) -> Expr:
    """Parse an expression string against an ordered parameter name list.

    Parameters
    ----------
    source : str
        Expression text, e.g. ``"sin(a1) * a2^2 + 1"``.
    params : sequence of str
        Declared parameter names; identifiers must resolve to one of them
        (or to the functions sin, cos, exp when followed by ``(``).

    Returns
    -------
    Expr
        Root of the parsed expression tree.

    Raises
    ------
    ParseError
        On any syntax error or unknown identifier, with the offending
        position in the message.
    """
    return _Parser(source, params).parse()


# ---------------------------------------------------------------------------
# basis families

class BasisSet:
    """Ordered family of scalar expressions over a shared parameter list.

    Parameters
    ----------
    params : sequence of str
        Ordered parameter names defining the meaning of ``alpha`` indices.
    sources : sequence of str
        One expression string per basis function.
    """

    def __init__(self, params, sources):
        self.params = tuple(params)
        self.sources = tuple(sources)
        self.exprs = tuple(parse_expr(s, self.params) for s in self.sources)
        self.deps = tuple(e.deps for e in self.exprs)
        self._derivs: dict[int, tuple[Expr, ...]] = {}

    def __len__(self) -> int:
        return len(self.exprs)

    def values(self, alpha) -> np.ndarray:
        """Evaluate all basis functions at a parameter point."""
        return np.array([e.value(alpha) for e in self.exprs], dtype=float)

    def _deriv_row(self, i: int):
        if i not in self._derivs:
            self._derivs[i] = tuple(e.deriv(i) for e in self.exprs)
        return self._derivs[i]

    def jacobian(self, alpha) -> np.ndarray:
        """Evaluate all partial derivatives; shape (len(self), n_params)."""
        out = np.empty((len(self.exprs), len(self.params)))
        for i in range(len(self.params)):
            row = self._deriv_row(i)
            for l, e in enumerate(row):
                out[l, i] = e.value(alpha)
        return out

    def check_box(self, lo, hi) -> None:
        """Certify every expression is defined on the box via intervals.

        Raises
        ------
        DomainError
            If some division (or negative power) can hit a vanishing
            denominator anywhere on the box.
        """
        for src, e in zip(self.sources, self.exprs):
            try:
                e.interval(lo, hi)
            except DomainError as exc:
                raise DomainError(f"basis function {src!r}: {exc}") from exc
