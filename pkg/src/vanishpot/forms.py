"""Volume forms modulo zero-integral forms, for sum-of-powers germs.

A volume form g(x) dx1...dxn is integrated over a cycle in the level set
{f = c} of f = x1^N + ... + xn^N (via the Gelfand-Leray residue g dx/df).
Two families of forms integrate to zero there:

* df ^ d(omega) for monomial (n-2)-forms omega.  Putting x^b into the slot
  that omits dx_i and dx_k gives, up to sign and the factor N,

      b_k * x_i^(N-1) * x^(b - e_k)  -  b_i * x_k^(N-1) * x^(b - e_i)

  (for n = 1 the only such form is df itself, i.e. x^(N-1));
* (f - c) * x^a, which vanishes on the level set.

The second family is what makes the quotient finite: modulo the first
alone the classes f^j x^a are all distinct.  With both, the quotient of
polynomials of degree <= maxdeg is spanned by the monomials of the box
[0, N-2]^n and has dimension (N-1)^n.  Elimination ranks every
monomial outside the box above every monomial inside it, so normal forms
come out over the box.

The level c is the value of f on the cycle: for F = f + lam_mu it is
c = -lam_mu.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .algebra import Deformation, order_basis
from .errors import DegreeOverflowError
from .linalg import SparseEchelon, exact_rank
from .polynomial import (
    Monomial,
    Polynomial,
    format_monomial,
    monomials_up_to,
    _as_fraction,
)

DEFAULT_LAM_MU = Fraction(-1)


def default_maxdeg(N: int, n: int) -> int:
    return 2 * n * (N - 1)


def box_monomials(N: int, n: int) -> list[Monomial]:
    """Basis monomials of the local algebra of the sum of N-th powers, in basis order."""
    return order_basis(itertools.product(range(N - 1), repeat=n))


def in_box(m: Monomial, N: int) -> bool:
    return all(e <= N - 2 for e in m)


@dataclass(frozen=True)
class VolumeFormGerm:
    """The form poly(x) dx1 ^ ... ^ dxn for the sum of N-th powers."""

    N: int
    poly: Polynomial

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")

    @property
    def n(self) -> int:
        return self.poly.n

    @classmethod
    def monomial(cls, N: int, m: Monomial, c=1) -> "VolumeFormGerm":
        return cls(N, Polynomial.monomial(m, c))


@dataclass(frozen=True)
class RelationGenerator:
    """Monomial x^beta placed in the (n-2)-form slot omitting dx_i, dx_k (1-based, i < k)."""

    i: int
    k: int
    beta: tuple

    def validate(self, n: int):
        if not (1 <= self.i < self.k <= n):
            raise ValueError(f"need 1 <= i < k <= n, got i={self.i}, k={self.k}, n={n}")
        if len(self.beta) != n or any(b < 0 for b in self.beta):
            raise ValueError(f"beta must be a length-{n} non-negative exponent vector")
        if self.beta[self.i - 1] + self.beta[self.k - 1] == 0:
            raise ValueError("beta must involve x_i or x_k, otherwise the relation is zero")


def relation_polynomial(g: RelationGenerator, N: int, n: int) -> VolumeFormGerm:
    g.validate(n)
    i, k = g.i - 1, g.k - 1
    b = g.beta
    terms: dict = {}
    if b[k]:
        m = list(b)
        m[k] -= 1
        m[i] += N - 1
        terms[tuple(m)] = terms.get(tuple(m), 0) + b[k]
    if b[i]:
        m = list(b)
        m[i] -= 1
        m[k] += N - 1
        terms[tuple(m)] = terms.get(tuple(m), 0) - b[i]
    return VolumeFormGerm(N, Polynomial(n, terms))


def exact_relations(N: int, n: int, maxdeg: int):
    """Every df ^ d(monomial) relation of total degree <= maxdeg."""
    if n == 1:
        if N - 1 <= maxdeg:
            yield Polynomial(1, {(N - 1,): 1})
        return
    for i in range(1, n + 1):
        for k in range(i + 1, n + 1):
            for beta in monomials_up_to(n, maxdeg - N + 2):
                if beta[i - 1] + beta[k - 1] == 0:
                    continue
                p = relation_polynomial(RelationGenerator(i, k, beta), N, n).poly
                if p and p.total_degree() <= maxdeg:
                    yield p


def level_relations(N: int, n: int, maxdeg: int, lam_mu: Fraction):
    """(f + lam_mu) * x^a, zero on the cycle {f + lam_mu = 0}."""
    F = Polynomial.fermat(n, N) + lam_mu
    for a in monomials_up_to(n, maxdeg - N):
        yield F.shift_monomial(a)


@dataclass(frozen=True)
class CohomologyClass:
    N: int
    n: int
    coords: Mapping

    def __post_init__(self):
        for m in self.coords:
            if len(m) != self.n or not in_box(m, self.N):
                raise ValueError(f"{m} is outside the box [0, {self.N - 2}]^{self.n}")

    def is_zero(self) -> bool:
        return not any(self.coords.values())

    def __eq__(self, other):
        if not isinstance(other, CohomologyClass):
            return NotImplemented
        a = {m: c for m, c in self.coords.items() if c}
        b = {m: c for m, c in other.coords.items() if c}
        return (self.N, self.n) == (other.N, other.n) and a == b

    def __hash__(self):
        return hash((self.N, self.n, frozenset((m, c) for m, c in self.coords.items() if c)))

    def scale(self, c) -> "CohomologyClass":
        c = _as_fraction(c)
        return CohomologyClass(self.N, self.n, {m: v * c for m, v in self.coords.items() if v * c})

    def vector(self) -> list[Fraction]:
        return [self.coords.get(m, Fraction(0)) for m in box_monomials(self.N, self.n)]

    def to_json(self) -> dict:
        return {format_monomial(m): str(c) for m, c in sorted(self.coords.items(), reverse=True) if c}


class RelationSpan:
    """Row-reduced span of all zero-integral forms of degree <= maxdeg."""

    def __init__(self, N: int, n: int, maxdeg: int, lam_mu=DEFAULT_LAM_MU):
        if N < 2 or n < 1:
            raise ValueError("need N >= 2 and n >= 1")
        if maxdeg < N - 1:
            raise ValueError(f"maxdeg must be >= N-1 = {N - 1}")
        lam_mu = None if lam_mu is None else _as_fraction(lam_mu)
        if lam_mu == 0:
            raise ValueError("lam_mu must be nonzero")
        self.N, self.n, self.maxdeg, self.lam_mu = N, n, maxdeg, lam_mu
        self.monomials = monomials_up_to(n, maxdeg)
        order = sorted(self.monomials, key=lambda m: (not in_box(m, N), sum(m), m))
        self._priority = {m: i for i, m in enumerate(order)}
        self.echelon = SparseEchelon(self._priority.__getitem__)
        for p in exact_relations(N, n, maxdeg):
            self.echelon.add(p.terms)
        if lam_mu is not None:
            for p in level_relations(N, n, maxdeg, lam_mu):
                self.echelon.add(p.terms)

    @property
    def rank(self) -> int:
        return self.echelon.rank

    def quotient_dimension(self) -> int:
        return len(self.monomials) - self.rank

    def rows(self) -> list[Polynomial]:
        return [Polynomial(self.n, r) for _, r in sorted(self.echelon.rows.items(), key=lambda t: self._priority[t[0]], reverse=True)]

    def contains(self, p: Polynomial) -> bool:
        return not self._remainder(p)

    def _remainder(self, p: Polynomial, trace=None) -> dict:
        if p.n != self.n:
            raise ValueError(f"form has dimension {p.n}, expected {self.n}")
        if p.total_degree() > self.maxdeg:
            raise DegreeOverflowError(
                f"form degree {p.total_degree()} exceeds maxdeg={self.maxdeg}; rebuild with a larger maxdeg"
            )
        return self.echelon.reduce(p.terms, trace)

    def reduce(self, g: VolumeFormGerm | Polynomial, trace: list | None = None) -> CohomologyClass:
        p = g.poly if isinstance(g, VolumeFormGerm) else g
        if isinstance(g, VolumeFormGerm) and g.N != self.N:
            raise ValueError(f"form is for N={g.N}, span for N={self.N}")
        rem = self._remainder(p, trace)
        if self.lam_mu is None:
            raise ValueError("normal forms over the box need the level relations (lam_mu != None)")
        return CohomologyClass(self.N, self.n, rem)


@functools.lru_cache(maxsize=32)
def relation_span(N: int, n: int, maxdeg: int | None = None, lam_mu=DEFAULT_LAM_MU) -> RelationSpan:
    """Cached RelationSpan; ``lam_mu=None`` keeps only the df ^ d(omega) relations."""
    return RelationSpan(N, n, default_maxdeg(N, n) if maxdeg is None else maxdeg, lam_mu)


def reduce_to_basis(g: VolumeFormGerm, maxdeg: int | None = None, lam_mu=DEFAULT_LAM_MU) -> CohomologyClass:
    """Normal form of g over the box monomials, modulo forms with zero integral."""
    return relation_span(g.N, g.n, maxdeg, _as_fraction(lam_mu)).reduce(g)


def reduction_chain_length(g: VolumeFormGerm, maxdeg: int | None = None, lam_mu=DEFAULT_LAM_MU) -> int:
    trace: list = []
    relation_span(g.N, g.n, maxdeg, _as_fraction(lam_mu)).reduce(g, trace)
    return len(trace)


def multiply_by_deformation_power(c: VolumeFormGerm, F: Deformation, lam, k: int) -> VolumeFormGerm:
    """c * ((f + sum_{i<mu} lam_i e_i) / lam_mu)^k, expanded exactly.

    On the level set F = 0 the multiplier equals (-1)^k.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    lam = [_as_fraction(v) for v in lam]
    if len(lam) != F.mu:
        raise ValueError(f"lambda has length {len(lam)}, expected {F.mu}")
    if F.basis[-1] != (0,) * F.n:
        raise ValueError("deformation basis must end with the constant monomial")
    if lam[-1] == 0:
        raise ValueError("lam_mu must be nonzero")
    head = F.polynomial(lam[:-1] + [Fraction(0)]) / lam[-1]
    return VolumeFormGerm(c.N, c.poly * head**k)


@dataclass(frozen=True)
class SurjectivityCertificate:
    N: int
    n: int
    maxdeg: int
    e: tuple
    rank: int
    mu: int
    full_rank: bool
    witnesses: tuple

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "n": self.n,
            "maxdeg": self.maxdeg,
            "e": list(self.e),
            "rank": self.rank,
            "mu": self.mu,
            "full_rank": self.full_rank,
            "witnesses": [format_monomial(m) for m in self.witnesses],
        }


def surjectivity_certificate(
    e: Monomial, N: int, n: int, maxdeg: int | None = None, lam_mu=DEFAULT_LAM_MU
) -> SurjectivityCertificate:
    """Rank of g -> [g * x^e] over all monomials g with deg(g * x^e) <= maxdeg.

    Full rank (= mu) means every vanishing-cohomology class is reached from
    the multiplier x^e, so the derivative along e is not the zero function.
    """
    e = tuple(e)
    if len(e) != n or not in_box(e, N) or any(v < 0 for v in e):
        raise ValueError(f"e={e} is not in the box [0, {N - 2}]^{n}")
    span = relation_span(N, n, maxdeg, _as_fraction(lam_mu))
    box = box_monomials(N, n)
    mu = len(box)
    gs = sorted((g for g in monomials_up_to(n, span.maxdeg - sum(e))), key=lambda m: (not in_box(m, N), sum(m), m))
    images = []
    for g in gs:
        prod = tuple(a + b for a, b in zip(g, e))
        images.append(dict(span.reduce(Polynomial.monomial(prod)).coords))
    rank, chosen = exact_rank(images, box)
    return SurjectivityCertificate(
        N=N, n=n, maxdeg=span.maxdeg, e=e, rank=rank, mu=mu,
        full_rank=rank == mu, witnesses=tuple(gs[i] for i in chosen),
    )
