import itertools
import random
import time
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from vanishpot.algebra import SingularityGerm, versal_deformation
from vanishpot.errors import DegreeOverflowError
from vanishpot.forms import (
    CohomologyClass,
    RelationGenerator,
    VolumeFormGerm,
    box_monomials,
    exact_relations,
    multiply_by_deformation_power,
    reduce_to_basis,
    reduction_chain_length,
    relation_polynomial,
    relation_span,
    surjectivity_certificate,
)
from vanishpot.polynomial import Polynomial, monomials_up_to, parse_polynomial


def P(text, n):
    return parse_polynomial(text, n)


def form(text, N, n):
    return VolumeFormGerm(N, P(text, n))


# --- relation generators ------------------------------------------------------


def test_relation_examples():
    r = relation_polynomial(RelationGenerator(1, 2, (3, 1)), 3, 2)
    assert r.poly == P("x1^5 - 3*x1^2*x2^3", 2)
    r = relation_polynomial(RelationGenerator(1, 2, (0, 1)), 3, 2)
    assert r.poly == P("x1^2", 2)
    r = relation_polynomial(RelationGenerator(2, 3, (0, 1, 1)), 3, 3)
    assert r.poly == P("x2^3 - x3^3", 3)


def _symbolic_relation(i, k, beta, N, n):
    """Coefficient of dx in df ^ d(x^beta dx_rest), by sympy, divided by N."""
    xs = sp.symbols(f"x1:{n + 1}")
    f = sum(x**N for x in xs)
    a = sp.prod([x**b for x, b in zip(xs, beta)])
    xi, xk = xs[i - 1], xs[k - 1]
    # the 2x2 minor of (df, da) in the (i, k) slot; the remaining dx's only fix an overall sign
    expr = sp.expand((sp.diff(f, xi) * sp.diff(a, xk) - sp.diff(f, xk) * sp.diff(a, xi)) / N)
    return sp.Poly(expr, *xs).as_dict()


@pytest.mark.parametrize(
    "i,k,beta,N,n",
    [(1, 2, (3, 1), 3, 2), (1, 2, (0, 1), 3, 2), (2, 3, (0, 1, 1), 3, 3), (1, 3, (2, 1, 4), 4, 3), (1, 2, (1, 1), 5, 2)],
)
def test_relation_matches_symbolic_oracle(i, k, beta, N, n):
    ours = {m: c for m, c in relation_polynomial(RelationGenerator(i, k, beta), N, n).poly.terms.items()}
    oracle = {m: Fraction(int(c)) for m, c in _symbolic_relation(i, k, beta, N, n).items()}
    neg = {m: -c for m, c in oracle.items()}
    assert ours == oracle or ours == neg


def test_generator_validation():
    with pytest.raises(ValueError):
        RelationGenerator(2, 1, (1, 1)).validate(2)
    with pytest.raises(ValueError):
        RelationGenerator(1, 3, (0, 1)).validate(2)
    with pytest.raises(ValueError):
        RelationGenerator(1, 2, (0, 0, 1)).validate(3)


# --- spans and normal forms --------------------------------------------------------


def test_span_low_degree():
    span = relation_span(3, 2, 2)
    assert span.contains(P("x1^2", 2))
    assert span.contains(P("x2^2", 2))


def test_span_one_variable():
    span = relation_span(2, 1, 4)
    assert span.contains(Polynomial.monomial((1,)))
    # every monomial reduces onto the single class of 1; odd ones vanish
    for d in range(1, 5):
        c = span.reduce(Polynomial.monomial((d,)))
        assert set(c.coords) <= {(0,)}
        assert c.is_zero() == (d % 2 == 1)


def test_span_quotient_at_least_mu():
    assert relation_span(3, 2, 4).quotient_dimension() >= 4


@pytest.mark.parametrize("n,N", [(1, 2), (1, 3), (1, 4), (2, 2), (2, 3), (2, 4), (3, 2), (3, 3), (4, 2)])
def test_quotient_dimension_is_mu(n, N):
    assert relation_span(N, n).quotient_dimension() == (N - 1) ** n


def test_graded_relations_alone_do_not_give_mu():
    # without the level relations the quotient keeps growing with the degree
    small = relation_span(3, 2, 6, lam_mu=None).quotient_dimension()
    large = relation_span(3, 2, 9, lam_mu=None).quotient_dimension()
    assert large > small > 4


@pytest.mark.parametrize("n,N", list(itertools.product([1, 2, 3], [2, 3, 4])))
def test_relations_reduce_to_zero(n, N):
    maxdeg = 2 * n * (N - 1)
    for p in exact_relations(N, n, maxdeg):
        assert reduce_to_basis(VolumeFormGerm(N, p)).is_zero()


def test_normal_form_examples():
    c = reduce_to_basis(form("x1*x2", 3, 2))
    assert c == CohomologyClass(3, 2, {(1, 1): Fraction(1)})
    assert reduce_to_basis(form("x1^5", 3, 2)) == reduce_to_basis(form("3*x1^2*x2^3", 3, 2))
    assert reduce_to_basis(form("x1^2", 3, 2)).is_zero()


def test_rewrite_chain():
    # x1^(kN+N-1) == kN x1^(kN-1) x2^N modulo the span
    N, n = 3, 2
    span = relation_span(N, n, 10)
    for k in (1, 2):
        lhs = Polynomial.monomial((k * N + N - 1, 0))
        rhs = Polynomial.monomial((k * N - 1, N), k * N)
        assert span.contains(lhs - rhs)


def test_degree_overflow():
    with pytest.raises(DegreeOverflowError):
        reduce_to_basis(form("x1^9", 3, 2), maxdeg=8)


def test_chain_length_reported():
    assert reduction_chain_length(form("x1*x2", 3, 2)) == 0
    assert reduction_chain_length(form("x1^5", 3, 2)) >= 1


def _random_poly(rng, n, maxdeg, terms=5):
    monos = monomials_up_to(n, maxdeg)
    return Polynomial(n, {rng.choice(monos): Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(terms)})


def test_linear_and_idempotent():
    rng = random.Random(3)
    N, n = 3, 2
    for _ in range(10):
        a, b = _random_poly(rng, n, 8), _random_poly(rng, n, 8)
        ca, cb = reduce_to_basis(VolumeFormGerm(N, a)), reduce_to_basis(VolumeFormGerm(N, b))
        s = reduce_to_basis(VolumeFormGerm(N, a * 2 - b))
        assert s.vector() == [2 * x - y for x, y in zip(ca.vector(), cb.vector())]
        back = Polynomial(n, dict(ca.coords))
        assert reduce_to_basis(VolumeFormGerm(N, back)) == ca


# --- integration oracle: the real level set {f = 1} for even N ------------------------


def _level_integral(poly, N, n, samples=4096):
    """int over {f=1} of g dS/|grad f| = int_{S^(n-1)} g(r u) r^n / N du, r = f(u)^(-1/N)."""
    if n == 2:
        t = 2 * np.pi * np.arange(samples) / samples
        u = np.stack([np.cos(t), np.sin(t)], axis=1)
        w = np.full(samples, 2 * np.pi / samples)
    else:
        # Gauss-Legendre in cos(theta), trapezoid in phi
        z, wz = np.polynomial.legendre.leggauss(64)
        phi = 2 * np.pi * np.arange(128) / 128
        Z, PH = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - Z**2)
        u = np.stack([s * np.cos(PH), s * np.sin(PH), Z], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(128, 2 * np.pi / 128)[None, :]).ravel()
    r = np.sum(u**N, axis=1) ** (-1.0 / N)
    x = r[:, None] * u
    vals = np.zeros(len(x))
    for m, c in poly.terms.items():
        vals += float(c) * np.prod(x**np.array(m), axis=1)
    return float(np.sum(vals * r**n / N * w))


@pytest.mark.parametrize("N,n", [(4, 2), (2, 3), (2, 2)])
def test_normal_form_preserves_level_integral(N, n):
    rng = random.Random(7)
    for _ in range(6):
        g = _random_poly(rng, n, 2 * n * (N - 1))
        c = reduce_to_basis(VolumeFormGerm(N, g))
        nf = Polynomial(n, dict(c.coords))
        a, b = _level_integral(g, N, n), _level_integral(nf, N, n)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_relations_integrate_to_zero():
    N, n = 4, 2
    for p in list(exact_relations(N, n, 8))[:25]:
        assert abs(_level_integral(p, N, n)) < 1e-10


# --- deformation powers -----------------------------------------------------------------


@pytest.fixture(scope="module")
def F32():
    return versal_deformation(SingularityGerm(Polynomial.fermat(2, 3)))


def test_power_zero_is_identity(F32):
    c = form("x1*x2 + 3", 3, 2)
    assert multiply_by_deformation_power(c, F32, [0, 0, 0, 1], 0) == c


def test_power_examples(F32):
    one = form("1", 3, 2)
    assert multiply_by_deformation_power(one, F32, [0, 0, 0, 1], 1).poly == P("x1^3 + x2^3", 2)
    sq = multiply_by_deformation_power(one, F32, [0, 0, 0, 1], 2)
    assert sq.poly == P("x1^3 + x2^3", 2) ** 2
    assert reduce_to_basis(sq, lam_mu=1) == reduce_to_basis(one, lam_mu=1)


def test_power_rejects_zero_lam_mu(F32):
    with pytest.raises(ValueError):
        multiply_by_deformation_power(form("1", 3, 2), F32, [0, 0, 0, 0], 1)


@pytest.mark.parametrize("n,N", [(2, 3), (2, 4), (3, 3)])
def test_operation_one_identity(n, N):
    F = versal_deformation(SingularityGerm(Polynomial.fermat(n, N)))
    rng = random.Random(11 + n + N)
    box = box_monomials(N, n)
    for _ in range(20):
        lam_mu = Fraction(rng.choice([-3, -2, -1, 1, 2, 5]), rng.randint(1, 4))
        lam = [0] * (F.mu - 1) + [lam_mu]
        c = VolumeFormGerm(N, Polynomial(n, {m: Fraction(rng.randint(-5, 5)) for m in rng.sample(box, 3)}))
        base = reduce_to_basis(c, lam_mu=lam_mu)
        for k in (1, 2):
            got = reduce_to_basis(multiply_by_deformation_power(c, F, lam, k), lam_mu=lam_mu)
            assert got == base.scale((-1) ** k)


# --- surjectivity certificates -------------------------------------------------------------


def test_certificate_for_constant_multiplier():
    cert = surjectivity_certificate((0, 0), 3, 2)
    assert cert.full_rank
    assert set(cert.witnesses) == set(box_monomials(3, 2))


def test_certificate_examples():
    assert surjectivity_certificate((1, 1), 3, 2, maxdeg=8).rank == 4
    assert surjectivity_certificate((2, 2), 4, 2).rank == 9


@pytest.mark.parametrize("n,N", [(2, 3), (2, 4), (3, 3)])
def test_certificates_full_rank_everywhere(n, N):
    t = time.perf_counter()
    for e in box_monomials(N, n):
        cert = surjectivity_certificate(e, N, n)
        assert cert.full_rank, e
        assert len(cert.witnesses) == cert.mu
    assert time.perf_counter() - t < 120


def test_certificate_rejects_outside_box():
    with pytest.raises(ValueError):
        surjectivity_certificate((2, 0), 3, 2)


def test_certificate_json_schema():
    doc = surjectivity_certificate((1, 0), 3, 2).to_json()
    assert set(doc) == {"N", "n", "maxdeg", "e", "rank", "mu", "full_rank", "witnesses"}
    assert all(isinstance(w, str) for w in doc["witnesses"])
