"""Exact sparse multivariate polynomials over the rationals.

Monomials are exponent tuples ``(a1, ..., an)``; coefficients are
``fractions.Fraction``.  Terms are printed in graded lexicographic order,
highest first, with ``x1 > x2 > ... > xn``.
"""

from __future__ import annotations

import itertools
import re
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import PolynomialSyntaxError

Monomial = tuple  # tuple[int, ...], one exponent per variable


def degree(m: Monomial) -> int:
    return sum(m)


def grlex_key(m: Monomial):
    return (sum(m), m)


def monomials_up_to(n: int, maxdeg: int) -> list[Monomial]:
    """All exponent vectors of length n and total degree <= maxdeg, ascending grlex."""
    out = []
    for d in range(maxdeg + 1):
        out.extend(monomials_of_degree(n, d))
    return out


def monomials_of_degree(n: int, d: int) -> list[Monomial]:
    if n == 0:
        return [()] if d == 0 else []
    out = []
    # stars and bars; sorted so that the result is ascending lex
    for bars in itertools.combinations(range(d + n - 1), n - 1):
        prev = -1
        exps = []
        for b in bars:
            exps.append(b - prev - 1)
            prev = b
        exps.append(d + n - 2 - prev)
        out.append(tuple(exps))
    out.sort()
    return out


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, float):
        # shortest round-trip decimal, so 0.3 becomes 3/10
        return Fraction(repr(c))
    return Fraction(c)


class Polynomial:
    """Immutable sparse polynomial in ``n`` variables with rational coefficients."""

    __slots__ = ("n", "_terms", "_hash")

    def __init__(self, n: int, terms: Mapping[Monomial, object] | Iterable = ()):
        if n < 1:
            raise ValueError("ambient dimension must be >= 1")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Monomial, Fraction] = {}
        for m, c in items:
            m = tuple(int(e) for e in m)
            if len(m) != n:
                raise ValueError(f"exponent vector {m} has length {len(m)}, expected {n}")
            if any(e < 0 for e in m):
                raise ValueError(f"negative exponent in {m}")
            acc[m] = acc.get(m, Fraction(0)) + _as_fraction(c)
        self.n = n
        self._terms = {m: c for m, c in acc.items() if c != 0}
        self._hash = None

    # construction helpers
    @classmethod
    def constant(cls, n: int, c=1) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        """The coordinate x_i, 1-based."""
        m = [0] * n
        m[i - 1] = 1
        return cls(n, {tuple(m): 1})

    @classmethod
    def monomial(cls, m: Monomial, c=1) -> "Polynomial":
        return cls(len(m), {tuple(m): c})

    @classmethod
    def fermat(cls, n: int, N: int) -> "Polynomial":
        terms = {}
        for i in range(n):
            m = [0] * n
            m[i] = N
            terms[tuple(m)] = 1
        return cls(n, terms)

    @property
    def terms(self) -> Mapping[Monomial, Fraction]:
        return MappingProxyType(self._terms)

    def __iter__(self) -> Iterator[tuple[Monomial, Fraction]]:
        return iter(sorted(self._terms.items(), key=lambda t: grlex_key(t[0]), reverse=True))

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, m: Monomial) -> Fraction:
        return self._terms.get(tuple(m), Fraction(0))

    def total_degree(self) -> int:
        return max((sum(m) for m in self._terms), default=-1)

    def min_degree(self) -> int:
        return min((sum(m) for m in self._terms), default=-1)

    # arithmetic
    def _check(self, other: "Polynomial"):
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        return Polynomial.constant(self.n, other)

    def __add__(self, other):
        other = self._coerce(other)
        acc = dict(self._terms)
        for m, c in other._terms.items():
            acc[m] = acc.get(m, 0) + c
        return Polynomial(self.n, acc)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            c = _as_fraction(other)
            return Polynomial(self.n, {m: c * v for m, v in self._terms.items()})
        self._check(other)
        acc: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                acc[m] = acc.get(m, 0) + c1 * c2
        return Polynomial(self.n, acc)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1 / _as_fraction(c))

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        result = Polynomial.constant(self.n, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def shift_monomial(self, m: Monomial) -> "Polynomial":
        """Multiply by the monomial x^m."""
        return Polynomial(self.n, {tuple(a + b for a, b in zip(k, m)): c for k, c in self._terms.items()})

    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.n == other.n and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self == Polynomial.constant(self.n, other)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.n, frozenset(self._terms.items())))
        return self._hash

    # calculus and truncation
    def derivative(self, i: int) -> "Polynomial":
        """Partial derivative with respect to x_i (1-based)."""
        j = i - 1
        acc = {}
        for m, c in self._terms.items():
            if m[j]:
                mm = list(m)
                mm[j] -= 1
                acc[tuple(mm)] = c * m[j]
        return Polynomial(self.n, acc)

    def gradient(self) -> list["Polynomial"]:
        return [self.derivative(i) for i in range(1, self.n + 1)]

    def truncate(self, k: int) -> "Polynomial":
        return Polynomial(self.n, {m: c for m, c in self._terms.items() if sum(m) <= k})

    def scale_variables(self, delta) -> "Polynomial":
        """p(delta*x1, ..., delta*xn)."""
        d = _as_fraction(delta)
        return Polynomial(self.n, {m: c * d ** sum(m) for m, c in self._terms.items()})

    def __call__(self, point: Sequence) -> Fraction:
        """Exact evaluation at a rational point."""
        if len(point) != self.n:
            raise ValueError(f"point has dimension {len(point)}, expected {self.n}")
        pt = [_as_fraction(v) for v in point]
        total = Fraction(0)
        for m, c in self._terms.items():
            t = c
            for v, e in zip(pt, m):
                if e:
                    t *= v ** e
            total += t
        return total

    def __str__(self):
        return format_polynomial(self)

    def __repr__(self):
        return f"Polynomial({self.n}, {format_polynomial(self)!r})"

    def compile(self) -> "NumericPolynomial":
        return NumericPolynomial(self)


def format_monomial(m: Monomial) -> str:
    parts = []
    for i, e in enumerate(m, start=1):
        if e == 1:
            parts.append(f"x{i}")
        elif e > 1:
            parts.append(f"x{i}^{e}")
    return "*".join(parts) if parts else "1"


def _format_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_polynomial(p: Polynomial) -> str:
    if p.is_zero():
        return "0"
    out = []
    for idx, (m, c) in enumerate(p):
        sign = "-" if c < 0 else "+"
        a = abs(c)
        mono = format_monomial(m)
        if mono == "1":
            body = _format_coeff(a)
        elif a == 1:
            body = mono
        else:
            body = f"{_format_coeff(a)}*{mono}"
        if idx == 0:
            out.append(("-" if sign == "-" else "") + body)
        else:
            out.append(f" {sign} {body}")
    return "".join(out)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?|\.\d+)|(?P<var>x\d+)|(?P<op>[-+*^/]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        mo = _TOKEN.match(text, pos)
        if not mo:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise PolynomialSyntaxError(f"unexpected character {text[start]!r}", text, start)
        kind = mo.lastgroup
        start = mo.start(kind)
        tokens.append((kind, mo.group(kind), start))
        pos = mo.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise PolynomialSyntaxError(msg, self.text, tok[2])

    def expression(self) -> Polynomial:
        total = Polynomial(self.n)
        sign = 1
        # a leading sign is accepted so that printed output always re-parses
        if self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1 if self.take()[1] == "-" else 1
        total = total + self.term() * sign
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1 if self.take()[1] == "-" else 1
            total = total + self.term() * sign
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return total

    def term(self) -> Polynomial:
        mono = [0] * self.n
        coeff_box = [Fraction(1)]
        self.factor(mono, coeff_box)
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            self.factor(mono, coeff_box)
        return Polynomial(self.n, {tuple(mono): coeff_box[0]})

    def factor(self, mono, coeff_box):
        kind, val, pos = self.take()
        if kind == "num":
            if self.peek()[0] == "op" and self.peek()[1] == "/":
                if "." in val:
                    self.fail("rational literal needs integer numerator", (kind, val, pos))
                self.take()
                k2, v2, p2 = self.take()
                if k2 != "num" or "." in v2:
                    self.fail("expected integer denominator", (k2, v2, p2))
                if int(v2) == 0:
                    self.fail("zero denominator", (k2, v2, p2))
                coeff_box[0] *= Fraction(int(val), int(v2))
            else:
                coeff_box[0] *= Fraction(val)
        elif kind == "var":
            idx = int(val[1:])
            if idx < 1 or idx > self.n:
                raise PolynomialSyntaxError(
                    f"variable {val} out of range for n={self.n}", self.text, pos
                )
            e = 1
            if self.peek()[0] == "op" and self.peek()[1] == "^":
                self.take()
                k2, v2, p2 = self.take()
                if k2 != "num" or "." in v2:
                    self.fail("expected integer exponent", (k2, v2, p2))
                e = int(v2)
            mono[idx - 1] += e
        else:
            self.fail(f"expected coefficient or variable, got {val or 'end of input'!r}", (kind, val, pos))


def parse_polynomial(text: str, n: int) -> Polynomial:
    """Parse ``text`` (variables x1..xn, ``+ - * ^``, integer/decimal/p/q literals)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _Parser(text, n).expression()


class NumericPolynomial:
    """Float64 vectorized evaluator for a Polynomial and its gradient."""

    def __init__(self, p: Polynomial):
        self.n = p.n
        self.poly = p
        items = sorted(p.terms.items(), key=lambda t: grlex_key(t[0]))
        self.exps = np.array([m for m, _ in items], dtype=np.int64).reshape(-1, p.n)
        self.coeffs = np.array([float(c) for _, c in items], dtype=float)
        self._grad = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"points have dimension {x.shape[-1]}, expected {self.n}")
        pts = x.reshape(-1, self.n)
        out = np.zeros(pts.shape[0])
        if self.coeffs.size:
            maxe = self.exps.max(axis=0)
            powers = []
            for j in range(self.n):
                pw = [np.ones(pts.shape[0])]
                for _ in range(int(maxe[j])):
                    pw.append(pw[-1] * pts[:, j])
                powers.append(pw)
            for c, m in zip(self.coeffs, self.exps):
                t = np.full(pts.shape[0], c)
                for j, e in enumerate(m):
                    if e:
                        t = t * powers[j][e]
                out += t
        return out.reshape(x.shape[:-1])

    def gradient(self, x) -> np.ndarray:
        if self._grad is None:
            self._grad = [NumericPolynomial(g) for g in self.poly.gradient()]
        return np.stack([g(x) for g in self._grad], axis=-1)
