"""Local algebras of isolated singularities and their miniversal deformations.

The local algebra Q_f = O/(df/dx1, ..., df/dxn) at the origin is computed
with a truncated Macaulay matrix: every monomial multiple x^b * df/dxi is
truncated at total degree D and the rows are eliminated exactly, choosing
the *lowest*-degree term of each row as its pivot (a local degree order).
The non-pivot monomials span O/(I + m^(D+1)); once no monomial of degree D
survives, m^D lies in I and the surviving monomials are a basis of Q_f.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import NonIsolatedSingularityError, UnstableBasisError
from .linalg import SparseEchelon
from .polynomial import (
    Monomial,
    Polynomial,
    format_monomial,
    format_polynomial,
    monomials_up_to,
    _as_fraction,
)

# beyond this truncation degree a growing basis is reported as non-isolated
HARD_DEGREE_CAP = 40


@dataclass(frozen=True)
class SingularityGerm:
    poly: Polynomial

    def __post_init__(self):
        p = self.poly
        zero = (0,) * p.n
        if p.coefficient(zero) != 0:
            raise ValueError(f"germ must vanish at the origin: f(0) = {p.coefficient(zero)}")
        for i, g in enumerate(p.gradient(), start=1):
            if g.coefficient(zero) != 0:
                raise ValueError(f"origin is not a critical point: df/dx{i}(0) != 0")

    @property
    def n(self) -> int:
        return self.poly.n

    @classmethod
    def parse(cls, text: str, n: int) -> "SingularityGerm":
        from .polynomial import parse_polynomial

        return cls(parse_polynomial(text, n))


def basis_sort_key(m: Monomial):
    return (sum(m), m)


def order_basis(monos) -> list[Monomial]:
    """Descending total degree, ties lexicographically descending, constant last."""
    return sorted(monos, key=basis_sort_key, reverse=True)


@dataclass(frozen=True)
class LocalAlgebra:
    basis: tuple
    mu: int
    degree_bound: int = 0

    def __post_init__(self):
        if self.mu != len(self.basis):
            raise ValueError("mu must equal the basis length")

    def strings(self) -> list[str]:
        return [format_monomial(m) for m in self.basis]


def jacobian_generators(f: SingularityGerm | Polynomial) -> list[Polynomial]:
    p = f.poly if isinstance(f, SingularityGerm) else f
    return p.gradient()


def _standard_monomials(gens: Sequence[Polynomial], n: int, D: int) -> list[Monomial]:
    monos = monomials_up_to(n, D)
    # local degree order: low degree wins the pivot; within a degree x1 > x2 > ...
    rank = {m: (-sum(m), m) for m in monos}
    index = {m: i for i, m in enumerate(sorted(monos, key=lambda m: rank[m]))}
    ech = SparseEchelon(index.__getitem__)
    for g in gens:
        low = g.min_degree()
        if low < 0:
            continue
        for b in monos:
            if sum(b) + low > D:
                continue
            row = {}
            for m, c in g.terms.items():
                mm = tuple(x + y for x, y in zip(m, b))
                if sum(mm) <= D:
                    row[mm] = c
            if row:
                ech.add(row)
    return [m for m in monos if m not in ech.rows]


def local_algebra(f: SingularityGerm, degree_bound: int | None = None) -> LocalAlgebra:
    """Monomial basis of Q_f via the truncated Macaulay matrix.

    With an explicit ``degree_bound`` D the basis at D and at D+1 must agree
    and no standard monomial may have degree D, else ``UnstableBasisError``.
    Without one, D starts at twice the degree of f and grows until the basis
    stabilizes; growth past ``HARD_DEGREE_CAP`` raises
    ``NonIsolatedSingularityError``.
    """
    gens = jacobian_generators(f)
    n = f.n
    explicit = degree_bound is not None
    D = degree_bound if explicit else max(2 * f.poly.total_degree(), 2)
    if D < 1:
        raise ValueError("degree_bound must be >= 1")
    while True:
        std = _standard_monomials(gens, n, D)
        top = [m for m in std if sum(m) == D]
        if not top:
            check = _standard_monomials(gens, n, D + 1)
            if sorted(check) == sorted(std):
                basis = tuple(order_basis(std))
                return LocalAlgebra(basis=basis, mu=len(basis), degree_bound=D)
        if explicit:
            raise UnstableBasisError(
                f"local algebra basis not stable at degree_bound={D}; retry with a larger bound"
            )
        D += 1
        if D > HARD_DEGREE_CAP:
            raise NonIsolatedSingularityError(
                f"basis still growing at degree {HARD_DEGREE_CAP}: singularity is not isolated"
            )


def fermat_exponent(p: Polynomial) -> int | None:
    """N if p = sum_i c_i x_i^N with every c_i != 0, else None."""
    if len(p) != p.n:
        return None
    N = None
    seen = set()
    for m in p.terms:
        nz = [i for i, e in enumerate(m) if e]
        if len(nz) != 1:
            return None
        e = m[nz[0]]
        if N is None:
            N = e
        if e != N or nz[0] in seen:
            return None
        seen.add(nz[0])
    return N if N is not None and N >= 2 else None


def milnor_number(f: SingularityGerm) -> int:
    mu = local_algebra(f).mu
    N = fermat_exponent(f.poly)
    if N is not None and mu != (N - 1) ** f.n:
        raise RuntimeError(f"Macaulay count {mu} disagrees with closed form {(N - 1) ** f.n}")
    return mu


@dataclass(frozen=True)
class Deformation:
    """F(x, lam) = base(x) + sum_i lam_i * x^basis[i]."""

    base: Polynomial
    basis: tuple

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def mu(self) -> int:
        return len(self.basis)

    def _check_lambda(self, lam):
        if len(lam) != self.mu:
            raise ValueError(f"lambda has length {len(lam)}, expected {self.mu}")

    def polynomial(self, lam) -> Polynomial:
        """Exact F(., lam) for rational lam."""
        self._check_lambda(lam)
        p = self.base
        for c, m in zip(lam, self.basis):
            p = p + Polynomial.monomial(m, _as_fraction(c))
        return p

    def numeric(self, lam) -> "LevelFunction":
        self._check_lambda(lam)
        return LevelFunction(self, np.asarray(lam, dtype=float))

    def evaluate(self, x, lam) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"point has dimension {x.shape[-1]}, expected {self.n}")
        return self.numeric(lam)(x)

    def evaluate_exact(self, x, lam) -> Fraction:
        return self.polynomial(lam)(x)

    def basis_values(self, x) -> np.ndarray:
        """e_i(x) for all i; shape (..., mu)."""
        x = np.asarray(x, dtype=float)
        exps = np.array(self.basis, dtype=np.int64).reshape(-1, self.n)
        return np.prod(x[..., None, :] ** exps, axis=-1)

    def render(self) -> str:
        parts = [format_polynomial(self.base)]
        for i, m in enumerate(self.basis, start=1):
            mono = format_monomial(m)
            parts.append(f"lambda{i}" if mono == "1" else f"lambda{i}*{mono}")
        return " + ".join(parts)


@dataclass(frozen=True)
class VersalDeformation(Deformation):
    germ: SingularityGerm = field(default=None, compare=False)
    algebra: LocalAlgebra = field(default=None, compare=False)


def versal_deformation(f: SingularityGerm, degree_bound: int | None = None) -> VersalDeformation:
    alg = local_algebra(f, degree_bound)
    if alg.basis[-1] != (0,) * f.n:
        raise RuntimeError("local algebra basis must end with the constant monomial")
    return VersalDeformation(base=f.poly, basis=alg.basis, germ=f, algebra=alg)


class LevelFunction:
    """Numeric F(., lam) with analytic gradient, vectorized over points."""

    def __init__(self, deformation: Deformation, lam: np.ndarray):
        self.deformation = deformation
        self.lam = lam
        n = deformation.n
        self.n = n
        exps = [np.array(m, dtype=np.int64) for m in deformation.base.terms]
        coeffs = [float(c) for c in deformation.base.terms.values()]
        acc: dict[tuple, float] = {}
        for m, c in zip(exps, coeffs):
            acc[tuple(m)] = acc.get(tuple(m), 0.0) + c
        for m, c in zip(deformation.basis, lam):
            acc[tuple(m)] = acc.get(tuple(m), 0.0) + float(c)
        items = sorted(acc.items())
        self.exps = np.array([m for m, _ in items], dtype=np.int64).reshape(-1, n)
        self.coeffs = np.array([c for _, c in items], dtype=float)

    def _powers(self, pts, maxe):
        powers = []
        for j in range(self.n):
            pw = [np.ones(pts.shape[0])]
            for _ in range(int(maxe[j])):
                pw.append(pw[-1] * pts[:, j])
            powers.append(pw)
        return powers

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, self.n)
        powers = self._powers(pts, self.exps.max(axis=0))
        out = np.zeros(pts.shape[0])
        for c, m in zip(self.coeffs, self.exps):
            if c == 0.0:
                continue
            t = c
            for j, e in enumerate(m):
                if e:
                    t = t * powers[j][e]
            out = out + t
        return out.reshape(x.shape[:-1])

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, self.n)
        powers = self._powers(pts, self.exps.max(axis=0))
        out = np.zeros_like(pts)
        for c, m in zip(self.coeffs, self.exps):
            if c == 0.0:
                continue
            for k in range(self.n):
                if m[k] == 0:
                    continue
                t = c * m[k]
                for j, e in enumerate(m):
                    ee = e - 1 if j == k else e
                    if ee:
                        t = t * powers[j][ee]
                out[:, k] = out[:, k] + t
        return out.reshape(x.shape)


def truncate_jet(f: Polynomial, k: int) -> Polynomial:
    if k < 0:
        raise ValueError("jet order must be >= 0")
    return f.truncate(k)


def embed_singularity(f: SingularityGerm, N: int, delta, eps: Sequence) -> Polynomial:
    """P(x) = f_{N+1}(delta*x) + sum_j (1 + eps_j) x_j^N, the sum-of-powers embedding.

    Requires N >= mu(f) + 2 and delta != 0.
    """
    mu = milnor_number(f)
    if N < mu + 2:
        raise ValueError(f"N={N} too small: need N >= mu + 2 = {mu + 2}")
    delta = _as_fraction(delta)
    if delta == 0:
        raise ValueError("delta must be nonzero")
    if len(eps) != f.n:
        raise ValueError(f"eps has length {len(eps)}, expected {f.n}")
    P = truncate_jet(f.poly, N + 1).scale_variables(delta)
    for j, e in enumerate(eps):
        m = [0] * f.n
        m[j] = N
        P = P + Polynomial.monomial(tuple(m), 1 + _as_fraction(e))
    return P
