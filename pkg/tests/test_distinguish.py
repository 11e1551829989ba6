import math

import numpy as np
import pytest

from vanishpot.distinguish import (
    JacobianMatrix,
    ball_moments,
    default_moment_order,
    injectivity_certificate,
    moment_jacobian,
    morse_moment_model,
    potential_jacobian,
    recover_parameters,
    separation_experiment,
)
from vanishpot.errors import EmptyDomainError, IrregularLevelSetError
from vanishpot.geometry import GridSpec, prepare_mesh
from vanishpot.linalg import jacobi_svd
from vanishpot.potential import moment_alphas, moments, sphere_points, volume_potential
from vanishpot.presets import FERMAT3_RADIUS, fermat_regular_lambda

MORSE_GRID = GridSpec(3, 1.5, 1.5 / 64)
MORSE_LAM = np.array([-1.0])
FERMAT_GRID = GridSpec(3, FERMAT3_RADIUS, FERMAT3_RADIUS / 64)
Y4 = sphere_points(16, 4.0)


@pytest.fixture(scope="module")
def morse_mesh(morse3):
    return prepare_mesh(morse3, MORSE_LAM, MORSE_GRID)


@pytest.fixture(scope="module")
def fermat_mesh(fermat33):
    return prepare_mesh(fermat33, fermat_regular_lambda(), FERMAT_GRID)


def test_default_moment_order():
    assert default_moment_order(1, 3) == 1
    assert default_moment_order(8, 3) == 3
    assert math.comb(default_moment_order(8, 2) + 2, 2) >= 11


def test_morse_jacobian_order_zero(morse3, morse_mesh):
    J = moment_jacobian(morse3, MORSE_LAM, 0, mesh=morse_mesh)
    assert J.shape == (1, 1)
    assert abs(J.entries[0, 0] + 2 * math.pi) / (2 * math.pi) < 0.02


def test_zero_density_gives_zero_matrix(morse3, morse_mesh):
    J = moment_jacobian(morse3, MORSE_LAM, 2, mesh=morse_mesh, psi=0)
    assert not np.any(J.entries)
    assert not injectivity_certificate(J).verdict


def test_too_few_rows(fermat33, fermat_mesh):
    with pytest.raises(ValueError, match="too few rows"):
        moment_jacobian(fermat33, fermat_regular_lambda(), 1, mesh=fermat_mesh)


def test_irregular_mesh_rejected(morse3):
    # the sphere of radius 1.1 crosses the grid ball of radius 1
    with pytest.raises(IrregularLevelSetError):
        moment_jacobian(morse3, [-1.21], 1, grid=GridSpec(3, 1.0, 1 / 16))
    with pytest.raises(EmptyDomainError):
        moment_jacobian(morse3, [0.5], 1, grid=GridSpec(3, 1.0, 1 / 16))


def test_morse_methods_agree(morse3, morse_mesh):
    S = moment_jacobian(morse3, MORSE_LAM, 2, mesh=morse_mesh).entries
    D = moment_jacobian(morse3, MORSE_LAM, 2, method="finite_difference", grid=MORSE_GRID).entries
    _, exact = morse_moment_model(3, 2)
    E = exact(MORSE_LAM)
    big = np.abs(E) > 1e-9
    assert np.all(np.abs(S - E)[big] / np.abs(E[big]) < 0.02)
    assert np.all(np.abs(D - E)[big] / np.abs(E[big]) < 0.02)


def test_fermat_methods_agree(fermat33, fermat_mesh):
    lam = fermat_regular_lambda()
    S = moment_jacobian(fermat33, lam, 3, mesh=fermat_mesh).entries
    D = moment_jacobian(fermat33, lam, 3, method="finite_difference", grid=FERMAT_GRID).entries
    assert np.max(np.abs(S - D) / np.abs(D)) < 0.02


def test_jacobi_svd_matches_numpy():
    rng = np.random.default_rng(3)
    for shape in [(1, 1), (5, 3), (20, 8), (8, 8)]:
        A = rng.normal(size=shape)
        assert np.allclose(jacobi_svd(A), np.linalg.svd(A, compute_uv=False), rtol=1e-10)


def test_certificate_single_entry():
    cert = injectivity_certificate(JacobianMatrix.build([(0, 0, 0)], [1], [[-2 * math.pi]]))
    assert cert.rank == 1 and cert.mu == 1 and cert.verdict
    assert cert.sigma_min == pytest.approx(1.0)


def test_certificate_duplicated_column():
    rng = np.random.default_rng(1)
    col = rng.normal(size=(6, 1))
    A = np.hstack([col, rng.normal(size=(6, 1)), col])
    cert = injectivity_certificate(JacobianMatrix.build(list(range(6)), [1, 2, 3], A))
    assert cert.sigma_min < 1e-12
    assert cert.rank == 2
    assert not cert.verdict


def test_certificate_invariant():
    rng = np.random.default_rng(2)
    for scale in [1.0, 1e-3, 1e-7]:
        A = rng.normal(size=(10, 4))
        A[:, 3] = A[:, 2] + scale * rng.normal(size=10)
        cert = injectivity_certificate(JacobianMatrix.build(list(range(10)), [1, 2, 3, 4], A))
        assert cert.verdict == (cert.rank == cert.mu) == (cert.sigma_min / cert.sigma_max > cert.threshold)
        assert list(cert.singular_values) == sorted(cert.singular_values, reverse=True)


def test_fermat_certificate(fermat33, fermat_mesh):
    J = moment_jacobian(fermat33, fermat_regular_lambda(), 3, mesh=fermat_mesh)
    cert = injectivity_certificate(J, 1e-6)
    assert cert.mu == 8
    assert cert.rank == 8
    assert cert.verdict


def test_rank_monotone_in_rows(fermat33, fermat_mesh):
    ranks = []
    for L in (2, 3, 4):
        J = moment_jacobian(fermat33, fermat_regular_lambda(), L, mesh=fermat_mesh)
        ranks.append(injectivity_certificate(J).rank)
    assert ranks == sorted(ranks)


def test_rank_monotone_random_rows():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(12, 6)) @ np.diag([1, 1, 1, 1e-4, 1e-8, 0.0])
    ranks = [
        injectivity_certificate(JacobianMatrix.build(list(range(k)), list(range(6)), A[:k])).rank
        for k in range(1, 13)
    ]
    assert ranks == sorted(ranks)


def test_ball_moments_exact():
    m = ball_moments(3, 1.0, 2)
    assert m[0] == pytest.approx(4 * math.pi / 3)
    assert m[4] == pytest.approx(4 * math.pi / 15)
    shifted = ball_moments(3, 1.0, 1, center=(0.3, 0.0, 0.0))
    assert shifted[moment_alphas(3, 1).index((1, 0, 0))] == pytest.approx(0.3 * 4 * math.pi / 3)


def test_recovery_fixed_point(morse3):
    target = moments(morse3, MORSE_LAM, None, 2, MORSE_GRID)
    res = recover_parameters(morse3, target, MORSE_LAM, grid=MORSE_GRID)
    assert res.iterations <= 1
    assert res.residual_norm < 1e-12
    assert res.converged


def test_recovery_morse_exact():
    model, jac = morse_moment_model(3, 2)
    target = model([-1.0])
    res = recover_parameters(None, target, [-1.2], model=model, jacobian=jac)
    assert abs(res.lambda_hat[0] + 1.0) < 1e-6
    assert res.converged
    assert res.residual_norm <= 1e-8 * np.linalg.norm(target)
    assert all(b < a for a, b in zip(res.history, res.history[1:]))


def test_recovery_halving_damping_morse():
    model, jac = morse_moment_model(3, 2)
    res = recover_parameters(None, model([-1.0]), [-1.2], model=model, jacobian=jac, damping="halving")
    assert abs(res.lambda_hat[0] + 1.0) < 1e-6


def test_recovery_from_quadrature_morse(morse3):
    target = moments(morse3, MORSE_LAM, None, 2, MORSE_GRID)
    res = recover_parameters(morse3, target, [-0.9], grid=MORSE_GRID)
    assert abs(res.lambda_hat[0] + 1.0) < 1e-8
    assert res.converged


def test_recovery_converged_flag_respects_tolerance():
    model, jac = morse_moment_model(3, 1)
    res = recover_parameters(None, model([-1.0]), [-1.2], model=model, jacobian=jac, max_iter=1)
    assert res.converged == (res.residual_norm <= 1e-8 * np.linalg.norm(model([-1.0])))
    assert not res.converged


def test_first_order_consistency(morse3, morse_mesh):
    J = potential_jacobian(morse3, MORSE_LAM, None, Y4[:4], morse_mesh).entries[:, 0]
    base = volume_potential(morse3, MORSE_LAM, None, Y4[:4], MORSE_GRID)
    errs = []
    for d in (0.2, 0.1):
        moved = volume_potential(morse3, MORSE_LAM + d, None, Y4[:4], MORSE_GRID)
        errs.append(np.max(np.abs(moved - base - d * J)))
    assert 4 * 0.7 < errs[0] / errs[1] < 4 * 1.3


def test_separation_morse(morse3):
    rep = separation_experiment(morse3, MORSE_LAM, 0.05, 20, Y4, MORSE_GRID, seed=0)
    seps = [p["separation"] for p in rep["pairs"]]
    assert len(seps) == 20
    assert rep["all_positive"] and min(seps) > 0
    oracle = 2 * math.pi / 4.0
    assert oracle / 2 < rep["min_separation"] < 2 * oracle
    assert rep["seed"] == 0
    assert rep["verdict"]


def test_separation_deterministic(morse3):
    a = separation_experiment(morse3, MORSE_LAM, 0.05, 4, Y4, MORSE_GRID, seed=7)
    b = separation_experiment(morse3, MORSE_LAM, 0.05, 4, Y4, MORSE_GRID, seed=7)
    assert a["pairs"] == b["pairs"]


def test_certificate_soundness_morse(morse3, morse_mesh):
    cert = injectivity_certificate(moment_jacobian(morse3, MORSE_LAM, 1, mesh=morse_mesh), 1e-6)
    assert cert.verdict
    rep = separation_experiment(morse3, MORSE_LAM, 0.01, 10, Y4, MORSE_GRID, seed=0)
    assert rep["all_positive"]


def test_scaling_equivariance(morse3, morse_mesh):
    c = 3.0
    J1 = moment_jacobian(morse3, MORSE_LAM, 2, mesh=morse_mesh)
    Jc = moment_jacobian(morse3, MORSE_LAM, 2, mesh=morse_mesh, psi=c)
    assert np.allclose(Jc.entries, c * J1.entries, rtol=1e-12, atol=1e-12 * np.abs(J1.entries).max())
    assert injectivity_certificate(J1).verdict == injectivity_certificate(Jc).verdict
    r1 = separation_experiment(morse3, MORSE_LAM, 0.05, 3, Y4, MORSE_GRID, seed=0)
    rc = separation_experiment(morse3, MORSE_LAM, 0.05, 3, Y4, MORSE_GRID, psi=c, seed=0)
    for p1, pc in zip(r1["pairs"], rc["pairs"]):
        assert pc["separation"] == pytest.approx(c * p1["separation"], rel=1e-10)
    assert r1["verdict"] == rc["verdict"]
