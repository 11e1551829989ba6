"""Jacobians of the parameter-to-moments map, rank certificates, recovery.

The derivative of a moment m_alpha(lam) = int_D x^alpha psi dx with respect
to lam_i is a surface integral over the boundary of D,

    dm_alpha/dlam_i = - int x^alpha psi e_i dS / |grad F|,

because moving lam_i by t moves the level set {F = 0} by -t e_i / |grad F|
along the outward normal.  A full-column-rank Jacobian certifies that the
moments (hence the exterior potential) separate nearby parameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra import Deformation
from .errors import (
    DivergenceError,
    EmptyDomainError,
    IrregularLevelSetError,
    PreconditionError,
)
from .geometry import GridSpec, LevelSetMesh, check_regularity, domain_reaches_boundary, prepare_mesh
from .linalg import jacobi_svd
from .potential import (
    MomentVector,
    PotentialSamples,
    _density,
    _pairwise_kernel,
    moment_alphas,
    moments,
    monomial_matrix,
    sphere_points,
    volume_potential_samples,
)

log = logging.getLogger(__name__)

DEFAULT_RANK_THRESHOLD = 1e-6


def default_moment_order(mu: int, n: int, margin: int = 3) -> int:
    """Smallest L with C(L + n, n) >= mu + margin."""
    L = 0
    while math.comb(L + n, n) < mu + margin:
        L += 1
    return L


@dataclass(frozen=True)
class JacobianMatrix:
    rows: tuple
    cols: tuple
    entries: np.ndarray
    singular_values: np.ndarray

    @classmethod
    def build(cls, rows, cols, entries) -> "JacobianMatrix":
        entries = np.asarray(entries, dtype=float).reshape(len(rows), len(cols))
        sv = jacobi_svd(entries) if entries.size else np.zeros(0)
        return cls(tuple(rows), tuple(cols), entries, sv)

    @property
    def shape(self):
        return self.entries.shape

    def to_json(self) -> dict:
        return {
            "rows": [list(r) if isinstance(r, tuple) else r for r in self.rows],
            "cols": list(self.cols),
            "entries": self.entries.tolist(),
            "singular_values": self.singular_values.tolist(),
        }


def _regular_mesh(F, lam, grid: GridSpec, tol: float = 1e-3) -> LevelSetMesh:
    mesh = prepare_mesh(F, lam, grid)
    _require_regular(mesh, tol)
    return mesh


def _require_regular(mesh: LevelSetMesh, tol: float = 1e-3):
    rep = check_regularity(mesh, tol)
    if not rep.regular:
        if mesh.empty:
            raise EmptyDomainError("empty domain: the level set has no components in the ball")
        raise IrregularLevelSetError(f"irregular level set: {rep.reason}")


def _boundary_weights(F: Deformation, mesh: LevelSetMesh, psi):
    """Facet centroids and -psi e_i dS/|grad F| for every parameter (columns)."""
    cents, areas, gn, _ = mesh.facet_arrays(arnold=False)
    if np.any(gn == 0):
        raise IrregularLevelSetError("zero gradient on a facet")
    dens = _density(psi, F.n)
    base = dens(cents) * areas / gn
    return cents, -base[:, None] * F.basis_values(cents)


def moment_jacobian(
    F: Deformation,
    lam,
    L: int,
    mesh: LevelSetMesh | None = None,
    method: str = "surface",
    psi=None,
    grid: GridSpec | None = None,
    delta: float = 1e-3,
    regularity_tol: float = 1e-3,
) -> JacobianMatrix:
    """d m_alpha / d lam_i for |alpha| <= L.

    ``method="surface"`` integrates over the boundary mesh (built from
    ``grid`` when not given); ``"finite_difference"`` takes central
    differences of quadrature moments with step ``delta``.
    """
    n, mu = F.n, F.mu
    alphas = moment_alphas(n, L)
    if len(alphas) < mu:
        raise ValueError(
            f"too few rows: order L={L} gives {len(alphas)} moments for mu={mu} parameters"
        )
    cols = tuple(range(1, mu + 1))
    lam = np.asarray(lam, dtype=float)
    if method == "surface":
        if mesh is None:
            if grid is None:
                raise ValueError("surface method needs a mesh or a grid")
            mesh = prepare_mesh(F, lam, grid)
        _require_regular(mesh, regularity_tol)
        cents, w = _boundary_weights(F, mesh, psi)
        entries = monomial_matrix(cents, alphas).T @ w
    elif method == "finite_difference":
        if grid is None:
            grid = mesh.grid if mesh is not None else None
        if grid is None:
            raise ValueError("finite_difference method needs a grid")
        entries = np.zeros((len(alphas), mu))
        for i in range(mu):
            step = np.zeros(mu)
            step[i] = delta
            plus = moments(F, lam + step, psi, L, grid).values
            minus = moments(F, lam - step, psi, L, grid).values
            entries[:, i] = (plus - minus) / (2 * delta)
    else:
        raise ValueError(f"unknown method {method!r}")
    return JacobianMatrix.build(alphas, cols, entries)


def potential_jacobian(F: Deformation, lam, psi, ys, mesh: LevelSetMesh) -> JacobianMatrix:
    """dI(y_j)/dlam_i on sample points ys (rows indexed by sample id)."""
    if F.n < 3:
        raise ValueError("potentials need n >= 3")
    _require_regular(mesh)
    ys = np.asarray(ys, dtype=float).reshape(-1, F.n)
    cents, w = _boundary_weights(F, mesh, psi)
    if len(cents):
        entries = _pairwise_kernel(cents, ys, F.n).T @ w
    else:
        entries = np.zeros((len(ys), F.mu))
    return JacobianMatrix.build(tuple(range(len(ys))), tuple(range(1, F.mu + 1)), entries)


@dataclass(frozen=True)
class InjectivityCertificate:
    rank: int
    mu: int
    sigma_min: float
    sigma_max: float
    threshold: float
    verdict: bool
    singular_values: tuple = ()
    raw_singular_values: tuple = ()

    def to_json(self) -> dict:
        return {
            "rank": self.rank,
            "mu": self.mu,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "singular_values": list(self.singular_values),
            "raw_singular_values": list(self.raw_singular_values),
        }


def injectivity_certificate(J: JacobianMatrix, threshold: float = DEFAULT_RANK_THRESHOLD) -> InjectivityCertificate:
    """Full-column-rank verdict after dividing each column by its norm.

    rank counts scaled singular values above ``threshold * sigma_max``, so
    verdict = (rank == mu) = (sigma_min / sigma_max > threshold).
    """
    a = np.array(J.entries, dtype=float)
    mu = a.shape[1]
    norms = np.linalg.norm(a, axis=0)
    scaled = np.divide(a, norms, out=np.zeros_like(a), where=norms > 0)
    sv = jacobi_svd(scaled) if a.size else np.zeros(0)
    full = np.zeros(mu)
    full[: min(len(sv), mu)] = sv[:mu]
    smax = float(full[0]) if mu else 0.0
    smin = float(full[-1]) if mu else 0.0
    rank = int(np.sum(full > threshold * smax)) if smax > 0 else 0
    return InjectivityCertificate(
        rank=rank,
        mu=mu,
        sigma_min=smin,
        sigma_max=smax,
        threshold=threshold,
        verdict=rank == mu and mu > 0,
        singular_values=tuple(float(s) for s in full),
        raw_singular_values=tuple(float(s) for s in J.singular_values),
    )


# ---------------------------------------------------------------- recovery


def ball_moments(n: int, radius: float, L: int, center=None) -> np.ndarray:
    """Exact moments of the ball |x - center| <= radius for |alpha| <= L."""
    alphas = moment_alphas(n, L)
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    # monomials of the centered ball, then binomial shift
    def centered(beta):
        if any(b % 2 for b in beta):
            return 0.0
        k = sum(beta)
        sphere = 2.0 * np.prod([math.gamma((b + 1) / 2) for b in beta]) / math.gamma((k + n) / 2)
        return radius ** (k + n) / (k + n) * sphere

    out = []
    for a in alphas:
        total = 0.0
        for beta in np.ndindex(*[e + 1 for e in a]):
            coef = np.prod([math.comb(e, b) * c[j] ** (e - b) for j, (e, b) in enumerate(zip(a, beta))])
            if coef:
                total += coef * centered(beta)
        out.append(total)
    return np.array(out)


def morse_moment_model(n: int, L: int):
    """Closed-form (model, jacobian) for F = sum x_i^2 + lam_1, psi = 1.

    The domain is the ball of radius sqrt(-lam_1); dm/dlam follows from
    m_alpha = c_alpha rho^(|alpha|+n).
    """
    alphas = moment_alphas(n, L)
    unit = ball_moments(n, 1.0, L)
    degs = np.array([sum(a) + n for a in alphas], dtype=float)

    def model(lam):
        t = -float(lam[0])
        if t <= 0:
            raise EmptyDomainError("empty domain")
        return unit * t ** (degs / 2)

    def jacobian(lam):
        t = -float(lam[0])
        if t <= 0:
            raise EmptyDomainError("empty domain")
        return (-(degs / 2) * unit * t ** (degs / 2 - 1))[:, None]

    return model, jacobian


@dataclass(frozen=True)
class RecoveryResult:
    lambda_hat: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    history: tuple = field(default=())

    def to_json(self) -> dict:
        return {
            "lambda_hat": [float(v) for v in self.lambda_hat],
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "history": list(self.history),
        }


def _check_unclipped(F, lam, grid):
    if domain_reaches_boundary(F, lam, grid):
        raise IrregularLevelSetError("domain reaches the ball boundary")


def _target_model(F, target, grid, psi, regularity_tol, jacobian_method, delta):
    """Default model/jacobian pair from quadrature on ``grid``."""
    if isinstance(target, MomentVector):
        L = target.order

        def model(lam):
            _check_unclipped(F, lam, grid)
            return moments(F, lam, psi, L, grid).values

        def jacobian(lam):
            if jacobian_method == "finite_difference":
                return moment_jacobian(F, lam, L, method="finite_difference", psi=psi, grid=grid, delta=delta).entries
            mesh = _regular_mesh(F, lam, grid, regularity_tol)
            return moment_jacobian(F, lam, L, mesh=mesh, psi=psi).entries

        return model, jacobian, np.asarray(target.values, dtype=float)
    if isinstance(target, PotentialSamples):
        ys = target.points

        def model(lam):
            _check_unclipped(F, lam, grid)
            return volume_potential_samples(F, lam, psi, ys, grid).values

        def jacobian(lam):
            if jacobian_method == "finite_difference":
                cols = []
                for i in range(F.mu):
                    e = np.zeros(F.mu)
                    e[i] = delta
                    cols.append((model(lam + e) - model(lam - e)) / (2 * delta))
                return np.stack(cols, axis=1)
            mesh = _regular_mesh(F, lam, grid, regularity_tol)
            return potential_jacobian(F, lam, psi, ys, mesh).entries

        return model, jacobian, np.asarray(target.values, dtype=float)
    raise TypeError("target must be a MomentVector or PotentialSamples")


def recover_parameters(
    F: Deformation | None,
    target,
    lambda0,
    grid: GridSpec | None = None,
    psi=None,
    model: Callable | None = None,
    jacobian: Callable | None = None,
    step_tol: float = 1e-10,
    max_iter: int = 50,
    residual_tol: float | None = None,
    max_halvings: int = 8,
    regularity_tol: float = 1e-3,
    jacobian_method: str = "finite_difference",
    delta: float = 1e-4,
    damping: str = "levenberg",
) -> RecoveryResult:
    """Damped Gauss-Newton on r(lam) = model(lam) - target.

    ``damping="levenberg"`` (default) takes Levenberg-Marquardt steps with
    a gain-ratio update of the damping.  ``damping="halving"`` halves the
    Gauss-Newton step until the residual decreases and, after
    ``max_halvings`` failures, tries Levenberg steps with growing damping;
    on badly conditioned problems the halved steps can drift far along
    weak directions.  Iteration
    stops when the step norm drops below ``step_tol`` or after ``max_iter``
    iterations.  ``model`` and ``jacobian`` default to quadrature moments
    (or potentials) on ``grid``; the Jacobian is by default the central
    difference of that same model (``jacobian_method="surface"`` uses the
    boundary integral instead, which differs from the discrete model by
    the quadrature error and slows convergence in weak directions).

    ``converged`` means the residual norm is at most ``residual_tol``
    (default 1e-8 times the target norm, floored at 1e-12).
    """
    if model is None or jacobian is None:
        if F is None or grid is None:
            raise ValueError("a deformation and a grid are needed for the default model")
        if jacobian_method not in ("finite_difference", "surface"):
            raise ValueError(f"unknown jacobian_method {jacobian_method!r}")
        m, j, tvals = _target_model(F, target, grid, psi, regularity_tol, jacobian_method, delta)
        model = model or m
        jacobian = jacobian or j
    else:
        tvals = np.asarray(getattr(target, "values", target), dtype=float)
    if residual_tol is None:
        residual_tol = max(1e-8 * float(np.linalg.norm(tvals)), 1e-12)

    if damping not in ("levenberg", "halving"):
        raise ValueError(f"unknown damping {damping!r}")

    lam = np.array(lambda0, dtype=float)
    r = model(lam) - tvals
    rn = float(np.linalg.norm(r))
    history = [rn]
    mu_damp, nu = None, 2.0
    it = 0
    for it in range(1, max_iter + 1):
        if rn == 0.0:
            it -= 1
            break
        J = np.asarray(jacobian(lam), dtype=float).reshape(len(r), -1)
        if damping == "halving":
            accepted, full = _halving_step(model, J, r, lam, rn, tvals, max_halvings)
        else:
            accepted, full, mu_damp, nu = _marquardt_step(model, J, r, lam, rn, tvals, mu_damp, nu)
        if accepted is None:
            if rn <= residual_tol or full < step_tol:
                break
            raise DivergenceError(
                f"residual did not decrease at iteration {it} (|r| = {rn:.3e}) even with maximal damping"
            )
        dlam, rnew, rnn = accepted
        log.debug("iter %d: |r| %.6e -> %.6e, |step| %.3e", it, rn, rnn, np.linalg.norm(dlam))
        assert rnn < rn
        lam = lam + dlam
        r, rn = rnew, rnn
        history.append(rn)
        if float(np.linalg.norm(dlam)) < step_tol:
            break
    return RecoveryResult(lam, rn, it, rn <= residual_tol, tuple(history))


def _halving_step(model, J, r, lam, rn, tvals, max_halvings):
    """Gauss-Newton step halved until the residual drops, then Levenberg."""
    step, *_ = np.linalg.lstsq(J, -r, rcond=None)
    t = 1.0
    for _ in range(max_halvings + 1):
        cand = _try_step(model, lam + t * step, tvals)
        if cand is not None and cand[1] < rn:
            return (t * step, *cand), float(np.linalg.norm(step))
        t *= 0.5
    return _levenberg(model, J, r, lam, rn, tvals), float(np.linalg.norm(step))


def _marquardt_step(model, J, r, lam, rn, tvals, mu_damp, nu, tries: int = 40):
    """Levenberg-Marquardt step with diagonal scaling and gain-ratio update.

    Scaling the damping by diag(J^T J) makes the step invariant under a
    rescaling of the parameters; the gain ratio keeps steps inside the
    region where the linear model is trusted, which matters along weakly
    determined directions where an undamped step overshoots by orders of
    magnitude while still lowering the residual.
    """
    jtj = J.T @ J
    g = J.T @ r
    d = np.diag(jtj).copy()
    dmax = float(np.max(d)) if d.size else 0.0
    if dmax <= 0:
        return None, 0.0, mu_damp, nu
    d = np.maximum(d, 1e-15 * dmax)
    if mu_damp is None:
        mu_damp = 1e-3
    full = 0.0
    for _ in range(tries):
        step = np.linalg.solve(jtj + mu_damp * np.diag(d), -g)
        full = float(np.linalg.norm(step))
        pred = rn**2 - float(np.sum((r + J @ step) ** 2))
        cand = _try_step(model, lam + step, tvals)
        if cand is not None and cand[1] < rn and pred > 0:
            rho = (rn**2 - cand[1] ** 2) / pred
            mu_damp *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            return (step, *cand), full, mu_damp, 2.0
        mu_damp *= nu
        nu *= 2.0
        if full < 1e-16:
            break
    return None, full, mu_damp, nu


def _try_step(model, lam, tvals):
    try:
        r = model(lam) - tvals
    except PreconditionError:
        return None
    if not np.all(np.isfinite(r)):
        return None
    return r, float(np.linalg.norm(r))


def _levenberg(model, J, r, lam, rn, tvals, tries: int = 12):
    jtj = J.T @ J
    g = J.T @ r
    damp = 1e-6 * max(float(np.max(np.diag(jtj))), 1e-300)
    for _ in range(tries):
        step = np.linalg.solve(jtj + damp * np.eye(len(g)), -g)
        cand = _try_step(model, lam + step, tvals)
        if cand is not None and cand[1] < rn:
            return (step, *cand)
        damp *= 10.0
    return None


# ---------------------------------------------------------- separation


def _sample_in_ball(rng, center, radius):
    d = rng.normal(size=len(center))
    d /= np.linalg.norm(d)
    return center + radius * rng.uniform() ** (1.0 / len(center)) * d


def separation_experiment(
    F: Deformation,
    lam,
    radius: float,
    num_pairs: int,
    y_samples,
    grid: GridSpec,
    psi=None,
    seed: int = 0,
    factor: float = 10.0,
    max_retries: int = 20,
    moment_order: int | None = None,
    threshold: float = DEFAULT_RANK_THRESHOLD,
    regularity_tol: float = 1e-3,
) -> dict:
    """Normalized separations max_y |I_l1(y) - I_l2(y)| / |l1 - l2| over random pairs.

    Pairs are drawn uniformly from the ball of ``radius`` around ``lam``.
    The prediction sigma_min(J_pot) / sqrt(#y) bounds the normalized
    separation from below to first order; a pair is consistent when its
    separation exceeds prediction / ``factor``.  Irregular samples are
    redrawn up to ``max_retries`` times per pair.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    lam = np.asarray(lam, dtype=float)
    ys = np.asarray(y_samples, dtype=float).reshape(-1, F.n)
    mesh = _regular_mesh(F, lam, grid, regularity_tol)
    L = default_moment_order(F.mu, F.n) if moment_order is None else moment_order
    cert = injectivity_certificate(moment_jacobian(F, lam, L, mesh=mesh, psi=psi), threshold)
    Jp = potential_jacobian(F, lam, psi, ys, mesh)
    sigma_min_pot = float(Jp.singular_values[-1]) if len(ys) >= F.mu else 0.0
    prediction = sigma_min_pot / math.sqrt(len(ys))

    rng = np.random.default_rng(seed)

    def regular_sample():
        for _ in range(max_retries):
            cand = _sample_in_ball(rng, lam, radius)
            try:
                _regular_mesh(F, cand, grid, regularity_tol)
            except PreconditionError:
                continue
            return cand
        raise IrregularLevelSetError(f"no regular parameter found after {max_retries} draws")

    pairs = []
    for _ in range(num_pairs):
        l1, l2 = regular_sample(), regular_sample()
        while np.array_equal(l1, l2):
            l2 = regular_sample()
        i1 = volume_potential_samples(F, l1, psi, ys, grid).values
        i2 = volume_potential_samples(F, l2, psi, ys, grid).values
        sep = float(np.max(np.abs(i1 - i2)) / np.linalg.norm(l1 - l2))
        pairs.append({"l1": l1.tolist(), "l2": l2.tolist(), "separation": sep})
    seps = [p["separation"] for p in pairs]
    min_sep = min(seps)
    return {
        "lambda": lam.tolist(),
        "mu": F.mu,
        "L": L,
        "rank": cert.rank,
        "singular_values": list(cert.singular_values),
        "verdict": cert.verdict,
        "seed": seed,
        "radius": radius,
        "y_samples": ys.tolist(),
        "pairs": pairs,
        "min_separation": min_sep,
        "all_positive": all(s > 0 for s in seps),
        "prediction": prediction,
        "factor": factor,
        "consistent": bool(min_sep >= prediction / factor),
    }


def default_y_samples(grid: GridSpec, count: int = 32, sphere_factor: float = 4.0) -> np.ndarray:
    return sphere_points(count, sphere_factor * grid.radius, grid.n)
