"""Newton potentials of D = {F <= 0} & B and of its boundary.

    I(y) = integral over D of psi(x) |x - y|^-(n-2) dx        (n >= 3)

Volume integrals use the cut-cell midpoint rule of
``geometry.domain_quadrature``.  Surface integrals run over the facets of a
level-set mesh with the standard charge dS / |grad F|.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .algebra import Deformation
from .geometry import DomainQuadrature, GridSpec, LevelSetMesh, domain_quadrature
from .polynomial import Polynomial, NumericPolynomial, monomials_up_to


class EmptyDomainWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Density:
    psi: Polynomial
    nonzero_at_origin: bool = False

    def __post_init__(self):
        if self.nonzero_at_origin and self.psi.coefficient((0,) * self.psi.n) == 0:
            raise ValueError("density must be nonzero at the origin")

    @classmethod
    def constant(cls, n: int, c=1) -> "Density":
        return cls(Polynomial.constant(n, c), nonzero_at_origin=c != 0)

    @property
    def n(self) -> int:
        return self.psi.n

    def __call__(self, x) -> np.ndarray:
        return NumericPolynomial(self.psi)(x)


def _density(psi, n) -> Density:
    if psi is None:
        return Density.constant(n)
    if isinstance(psi, Density):
        return psi
    if isinstance(psi, Polynomial):
        return Density(psi)
    return Density.constant(n, psi)


@dataclass(frozen=True)
class PotentialSamples:
    points: np.ndarray
    values: np.ndarray
    empty: bool = False


@dataclass(frozen=True)
class MomentVector:
    order: int
    n: int
    alphas: tuple
    values: np.ndarray

    def __getitem__(self, alpha) -> float:
        return float(self.values[self.alphas.index(tuple(alpha))])

    def scaled(self, c: float) -> "MomentVector":
        return MomentVector(self.order, self.n, self.alphas, self.values * c)

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "entries": [{"alpha": list(a), "value": float(v)} for a, v in zip(self.alphas, self.values)],
        }


def moment_alphas(n: int, L: int) -> tuple:
    return tuple(monomials_up_to(n, L))


def newton_kernel(x, y, n: int):
    """|x - y|^-(n-2); broadcasts over leading axes."""
    if n <= 2:
        raise ValueError("the Newton kernel needs n >= 3 (for n = 2 it is identically 1)")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r2 = np.sum(d * d, axis=-1)
    if np.any(r2 == 0):
        raise ValueError("kernel is singular at x = y")
    return r2 ** (-(n - 2) / 2.0)


def _as_points(y, n):
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = y.reshape(-1, n)
    return y, single


def _check_exterior(y, radius):
    if np.any(np.linalg.norm(y, axis=1) <= radius):
        raise ValueError(f"evaluation points must lie outside the ball of radius {radius}")


def _pairwise_kernel(points, y, n):
    """(P, m) matrix of kernel values."""
    d2 = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ y.T
        + np.einsum("ij,ij->i", y, y)[None, :]
    )
    d2 = np.maximum(d2, 0.0)
    if np.any(d2 == 0):
        raise ValueError("kernel is singular at x = y")
    return d2 ** (-(n - 2) / 2.0)


def quadrature_potential(q: DomainQuadrature, psi, y) -> np.ndarray:
    n = q.grid.n
    dens = _density(psi, n)
    y, single = _as_points(y, n)
    if q.empty:
        return np.zeros(len(y))
    w = q.weights * dens(q.points)
    vals = w @ _pairwise_kernel(q.points, y, n)
    return vals


def volume_potential(F, lam, psi, y, grid: GridSpec):
    """Newton potential of D at exterior point(s) y.

    Returns a float for a single point, an array for a (m, n) batch.  An
    empty domain gives zeros and an ``EmptyDomainWarning``.
    """
    if grid.n < 3:
        raise ValueError("potentials need n >= 3")
    yy, single = _as_points(y, grid.n)
    _check_exterior(yy, grid.radius)
    q = domain_quadrature(F, lam, grid)
    if q.empty:
        warnings.warn("empty domain: potential is zero", EmptyDomainWarning, stacklevel=2)
    vals = quadrature_potential(q, psi, yy)
    return float(vals[0]) if single else vals


def volume_potential_samples(F, lam, psi, ys, grid: GridSpec) -> PotentialSamples:
    ys = np.asarray(ys, dtype=float).reshape(-1, grid.n)
    _check_exterior(ys, grid.radius)
    q = domain_quadrature(F, lam, grid)
    return PotentialSamples(ys, quadrature_potential(q, psi, ys), empty=q.empty)


def _surface_terms(mesh: LevelSetMesh, psi, arnold: bool):
    cents, areas, gn, sign = mesh.facet_arrays(arnold=arnold)
    if np.any(gn == 0):
        from .errors import IrregularLevelSetError

        raise IrregularLevelSetError("zero gradient on a facet")
    dens = _density(psi, mesh.n)
    return cents, sign * dens(cents) * areas / gn


def surface_charge_potential(mesh: LevelSetMesh, psi, y):
    """Single-layer potential of the Arnold cycle carrying the standard charge dS/|grad F|."""
    n = mesh.n
    if n < 3:
        raise ValueError("potentials need n >= 3")
    yy, single = _as_points(y, n)
    cents, w = _surface_terms(mesh, psi, arnold=True)
    if len(w) == 0:
        vals = np.zeros(len(yy))
    else:
        _check_outside_hull(cents, yy)
        vals = w @ _pairwise_kernel(cents, yy, n)
    return float(vals[0]) if single else vals


def _check_outside_hull(cents, y):
    r = np.max(np.linalg.norm(cents, axis=1))
    if np.any(np.linalg.norm(y, axis=1) <= r):
        raise ValueError("evaluation points must lie outside the mesh")


def _basis_column(F: Deformation, i: int, pts) -> np.ndarray:
    if not 1 <= i <= F.mu:
        raise IndexError(f"parameter index {i} out of range 1..{F.mu}")
    m = np.array(F.basis[i - 1])
    return np.prod(pts ** m, axis=-1)


def boundary_charge(mesh: LevelSetMesh, F: Deformation, i: int, psi):
    """Facet centroids and weights -e_i psi dS/|grad F| over the boundary of D.

    The boundary of {F <= 0} carries the natural orientation on every
    component, so no Arnold sign enters here.
    """
    cents, w = _surface_terms(mesh, psi, arnold=False)
    return cents, -w * _basis_column(F, i, cents)


def potential_lambda_derivative(F: Deformation, lam, i: int, psi, y, mesh: LevelSetMesh):
    """dI(y)/dlam_i as the surface integral of -e_i psi K dS/|grad F| (Gelfand-Leray form)."""
    n = mesh.n
    if n < 3:
        raise ValueError("potentials need n >= 3")
    yy, single = _as_points(y, n)
    cents, w = boundary_charge(mesh, F, i, psi)
    vals = w @ _pairwise_kernel(cents, yy, n) if len(w) else np.zeros(len(yy))
    return float(vals[0]) if single else vals


def quadrature_moments(q: DomainQuadrature, psi, L: int) -> MomentVector:
    n = q.grid.n
    alphas = moment_alphas(n, L)
    dens = _density(psi, n)
    if q.empty:
        return MomentVector(L, n, alphas, np.zeros(len(alphas)))
    w = q.weights * dens(q.points)
    mono = monomial_matrix(q.points, alphas)
    return MomentVector(L, n, alphas, mono.T @ w)


def monomial_matrix(points, alphas) -> np.ndarray:
    """(P, len(alphas)) matrix of x^alpha."""
    points = np.asarray(points, dtype=float)
    maxe = max((max(a) for a in alphas), default=0)
    powers = [np.ones_like(points)]
    for _ in range(maxe):
        powers.append(powers[-1] * points)
    cols = []
    for a in alphas:
        c = np.ones(len(points))
        for j, e in enumerate(a):
            if e:
                c = c * powers[e][:, j]
        cols.append(c)
    return np.stack(cols, axis=1)


def moments(F, lam, psi, L: int, grid: GridSpec) -> MomentVector:
    """m_alpha = integral over D of x^alpha psi dx for all |alpha| <= L."""
    return quadrature_moments(domain_quadrature(F, lam, grid), psi, L)


@functools.lru_cache(maxsize=16)
def _taylor_coefficients(n: int, L: int):
    """Callables T_alpha(y) = (1/alpha!) d^alpha_x K(x, y) at x = 0, from symbolic differentiation."""
    xs = sp.symbols(f"x1:{n + 1}")
    ys = sp.symbols(f"y1:{n + 1}")
    K = sum((a - b) ** 2 for a, b in zip(xs, ys)) ** sp.Rational(-(n - 2), 2)
    at0 = {x: 0 for x in xs}
    funcs = []
    for alpha in moment_alphas(n, L):
        expr = K
        for x, e in zip(xs, alpha):
            if e:
                expr = sp.diff(expr, x, e)
        expr = sp.simplify(expr.subs(at0)) / sp.prod([sp.factorial(e) for e in alpha])
        funcs.append(sp.lambdify(ys, expr, "numpy"))
    return funcs


def multipole_eval(m: MomentVector, y, n: int, radius: float | None = None):
    """Truncated exterior expansion sum_alpha T_alpha(y) m_alpha.

    ``radius`` (the ball radius) enables the convergence guard |y| > 2R.
    """
    if n < 3:
        raise ValueError("potentials need n >= 3")
    if m.n != n:
        raise ValueError("moment dimension mismatch")
    yy, single = _as_points(y, n)
    if radius is not None and np.any(np.linalg.norm(yy, axis=1) <= 2 * radius):
        raise ValueError("|y| must exceed twice the ball radius for the expansion")
    funcs = _taylor_coefficients(n, m.order)
    cols = [np.broadcast_to(np.asarray(f(*yy.T), dtype=float), (len(yy),)) for f in funcs]
    T = np.stack(cols, axis=1)
    vals = T @ m.values
    return float(vals[0]) if single else vals


def sphere_points(count: int, radius: float, n: int = 3) -> np.ndarray:
    """Deterministic, nearly uniform points on the sphere of given radius (Fibonacci lattice)."""
    if n == 2:
        t = 2 * math.pi * (np.arange(count) + 0.5) / count
        return radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    if n != 3:
        raise ValueError("sphere_points supports n = 2, 3")
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    phi = math.pi * (1 + 5**0.5) * k
    r = np.sqrt(1 - z * z)
    return radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
