import json

import numpy as np
import pytest

from linespec.certifier import (NEAR_RADIUS, CertificateProblem, GridTooCoarseError, SeparationError,
                                SingularSystemError, build_certificate, build_deterministic_certificate,
                                build_random_certificate, certify_sup_bound, discrete_certificate,
                                near_region_check, fine_spacing_grid_size)
from linespec.fejer import KernelParams, gbar_eval
from linespec.gridlab import GridSpec
from linespec.sensing import gaussian_operator, subsampled_orthogonal
from linespec.spectral import check_separation, random_signs


def separated(S, N, d, seed, sep=None):
    rng = np.random.default_rng(seed)
    sep = sep or (2.0 if d == 1 else 5.0) / N
    assert sep <= 0.5, "separation above the torus diameter"
    for _ in range(100_000):
        T = rng.random((S, d))
        if check_separation(T, thresholds=sep).satisfied:
            return T
    raise RuntimeError("no separated support found")


def test_problem_validation():
    with pytest.raises(ValueError):
        CertificateProblem([[0.1], [0.5]], [1.0, 0.5], 16)
    with pytest.raises(ValueError):
        CertificateProblem([[0.1]], [1.0], 15)
    with pytest.raises(ValueError):
        CertificateProblem([[0.1]], [1.0], 16, mode="fancy")
    with pytest.raises(ValueError):
        CertificateProblem([[0.1]], [1.0], 16, mode="random")
    with pytest.raises(ValueError):
        CertificateProblem([[0.1]], [1.0], 16, mode="random", operator=gaussian_operator(8, 10, seed=0))
    with pytest.raises(SeparationError):
        CertificateProblem([[0.1], [0.15]], [1.0, 1.0], 16)
    p = CertificateProblem([[0.1], [0.15]], [1.0, 1.0], 16, enforce_separation=False)
    assert p.S == 2 and p.separation == pytest.approx(2 / 16)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_single_spike(d):
    N = 8
    u = np.exp(0.7j)
    r1 = np.full(d, 0.3)
    cert = build_deterministic_certificate(CertificateProblem(r1[None, :], [u], N))
    np.testing.assert_allclose(cert.system.matrix, np.eye(d + 1), atol=1e-13)
    assert cert.system.alpha[0] == pytest.approx(u)
    np.testing.assert_allclose(cert.system.alpha_l, 0, atol=1e-14)
    pts = np.random.default_rng(0).random((20, d))
    expect = u * gbar_eval(pts - r1, (0,) * d, KernelParams(N), d)
    np.testing.assert_allclose(cert.evaluate(pts), expect, atol=1e-12)


def test_single_spike_hessian():
    N = 16
    cert = build_deterministic_certificate(CertificateProblem([[0.2, 0.4, 0.6]], [1j], N))
    rep = near_region_check(cert, 0, n_points=50)
    assert rep.passed
    assert rep.at_center_second == pytest.approx(-1.0, abs=1e-9)
    assert rep.at_center_mixed == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("d,S", [(1, 3), (2, 3), (3, 3)])
def test_dbar_structure(d, S):
    N = 16
    T = separated(S, N, d, seed=S + d)
    cert = build_deterministic_certificate(CertificateProblem(T, random_signs(S, 1), N))
    D = cert.system.matrix
    np.testing.assert_allclose(np.diag(D), 1.0, atol=1e-12)
    np.testing.assert_allclose(D, D.conj().T, atol=1e-12)
    if d == 3:
        assert np.linalg.norm(np.eye(D.shape[0]) - D, 2) <= 0.03254
        assert np.linalg.norm(np.linalg.inv(D), 2) <= 1.03363
        assert np.abs(cert.system.alpha).max() <= 1.0021
        assert np.abs(cert.kappa * cert.system.alpha_l).max() <= 0.0132


@pytest.mark.parametrize("d", [1, 2, 3])
def test_interpolation_contract(d):
    N = 16
    T = separated(3, N, d, seed=10 + d)
    cert = build_deterministic_certificate(CertificateProblem(T, random_signs(3, 2), N))
    val, grad = cert.interpolation_residuals()
    assert val <= 1e-8 and grad <= 1e-6 * cert.kappa


@pytest.mark.parametrize("d", [1, 2, 3])
def test_two_evaluation_paths(d):
    N = 16
    T = separated(2, N, d, seed=d)
    cert = build_deterministic_certificate(CertificateProblem(T, random_signs(2, 3), N))
    pts = np.random.default_rng(5).random((30, d))
    for n in [(0,) * d, (1,) + (0,) * (d - 1), (0,) * (d - 1) + (2,)]:
        a, b = cert.evaluate(pts, n), cert.evaluate_terms(pts, n)
        assert np.abs(a - b).max() <= 1e-9 * cert.kappa ** sum(n)


def test_grid_values_match_evaluate():
    N = 16
    cert = build_deterministic_certificate(CertificateProblem(separated(2, N, 2, 0), [1, -1], N))
    K = (40, 48)
    G = cert.grid_values(K)
    ii = np.array([[3, 5], [39, 0], [7, 47]])
    np.testing.assert_allclose(G[ii[:, 0], ii[:, 1]], cert.evaluate(ii / np.array(K)), atol=1e-12)
    G1 = cert.grid_values(K, (1, 0))
    np.testing.assert_allclose(G1[3, 5], cert.evaluate([[3 / 40, 5 / 48]], (1, 0))[0], atol=1e-10)


def test_random_with_unitary_operator_is_deterministic():
    N = 16
    L = 2 * N + 1
    op = subsampled_orthogonal(N, L, seed=0, replace=False)         # A^H A = I
    T = separated(3, N, 1, 7)
    u = random_signs(3, 4)
    rnd = build_random_certificate(CertificateProblem(T, u, N, "random", op))
    det = build_deterministic_certificate(CertificateProblem(T, u, N))
    np.testing.assert_allclose(rnd.system.matrix, det.system.matrix, atol=1e-12)
    pts = np.random.default_rng(0).random((100, 1))
    np.testing.assert_allclose(rnd.evaluate(pts), det.evaluate(pts), atol=1e-9)
    assert rnd.concentration <= 1e-12


def test_random_certificate_contract():
    N = 16
    op = gaussian_operator(N, 60, seed=3)
    T = separated(2, N, 1, 8)
    u = random_signs(2, 5)
    cert = build_certificate(CertificateProblem(T, u, N, "random", op))
    assert cert.kind == "random"
    val, _ = cert.interpolation_residuals()
    assert val <= 1e-8
    # Q lives in the row space of A: w = A^H q
    np.testing.assert_allclose(cert.w, op.adjoint(cert.q), atol=1e-12)
    pts = np.random.default_rng(1).random((25, 1))
    np.testing.assert_allclose(cert.evaluate(pts), cert.evaluate_terms(pts), atol=1e-9)


def test_gaussian_concentration():
    N, S = 64, 2
    L = 2 * N + 1
    M = int(np.ceil(20 * S * np.log(L) ** 2))
    ok = 0
    for t in range(50):
        op = gaussian_operator(N, M, seed=100 + t)
        T = separated(S, N, 1, t)
        cert = build_random_certificate(CertificateProblem(T, random_signs(S, t), N, "random", op))
        ok += cert.concentration <= 0.25
    assert ok >= 45


def test_singular_random_system():
    N = 16
    op = gaussian_operator(N, 2, seed=0)
    with pytest.raises(SingularSystemError):
        build_random_certificate(CertificateProblem([[0.1], [0.5]], [1, 1], N, "random", op))


def test_certified_bound_1d():
    N = 16
    cert = build_deterministic_certificate(CertificateProblem(separated(2, N, 1, 3), random_signs(2, 6), N))
    b = certify_sup_bound(cert)
    assert b.passed and b.bound < 1 and b.far_ok
    assert b.bound >= b.grid_max
    assert b.K == (64 * 33,)
    assert json.dumps(b.to_dict())


def test_certified_bound_monotone_under_refinement():
    N = 16
    cert = build_deterministic_certificate(CertificateProblem(separated(3, N, 1, 9), random_signs(3, 9), N))
    coarse = certify_sup_bound(cert, grid_density=400)
    fine = certify_sup_bound(cert, grid_density=3200)
    slack = np.pi * N * coarse.spacing * coarse.sup_estimate
    assert fine.bound <= coarse.bound + slack


def test_grid_too_coarse():
    cert = build_deterministic_certificate(CertificateProblem([[0.1]], [1], 16))
    with pytest.raises(GridTooCoarseError):
        certify_sup_bound(cert, grid_density=40)


def test_fine_spacing_rule_tiny_n():
    N = 2
    assert fine_spacing_grid_size(N) == int(np.ceil(3 * 5 ** 4 / 0.0005))
    cert = build_deterministic_certificate(CertificateProblem([[0.3]], [1j], N))
    b = certify_sup_bound(cert, rule="fine_spacing")
    assert b.passed and b.rule == "fine_spacing"
    with pytest.raises(ValueError):
        certify_sup_bound(cert, rule="nope")


def test_near_region_3d():
    N = 16
    T = separated(5, N, 3, 21)
    cert = build_deterministic_certificate(CertificateProblem(T, random_signs(5, 21), N))
    for k in range(5):
        rep = near_region_check(cert, k, n_points=100)
        assert rep.passed
        assert rep.at_center_second <= -0.8572
        assert rep.at_center_mixed <= 0.1967 + 1e-3
        assert rep.mixed_ok
        assert rep.second_ok == (rep.max_second <= -0.842)


@pytest.mark.parametrize("d", [1, 3])
def test_second_partial_bound_on_inner_ball(d):
    # the -0.842 kappa^2 bound holds on half the default near radius
    cert = build_deterministic_certificate(CertificateProblem(np.full((1, d), 0.3), [1], 16))
    assert near_region_check(cert, 0, 300, radius=0.5 * NEAR_RADIUS / 16).second_ok


def test_discrete_certificate():
    N = 16
    T = np.array([[0.1], [0.5]])
    cert = build_deterministic_certificate(CertificateProblem(T, [1, -1j], N))
    assert certify_sup_bound(cert).passed
    for K in (50, 100, 500):
        dc = discrete_certificate(cert, GridSpec((K,)))
        assert dc.passed and dc.sign_error <= 1e-8 and dc.max_off_support < 1
        assert dc.offending_node is None
    with pytest.raises(ValueError):
        discrete_certificate(cert, GridSpec((37,)))


def test_discrete_certificate_reports_offender():
    # six Gaussian measurements are far too few: |Q| overshoots off the support
    N = 16
    op = gaussian_operator(N, 6, seed=1)
    cert = build_random_certificate(CertificateProblem([[0.1], [0.5]], [1, 1j], N, "random", op))
    dc = discrete_certificate(cert, GridSpec((100,)))
    assert not dc.passed and dc.sign_error <= 1e-8
    assert abs(dc.v[dc.offending_node]) == pytest.approx(dc.max_off_support)
    assert dc.max_off_support >= 1


def test_certificate_json():
    cert = build_deterministic_certificate(CertificateProblem(separated(2, 16, 2, 1), [1, 1j], 16))
    out = json.loads(json.dumps(cert.to_dict()))
    assert out["kind"] == "deterministic" and len(out["alpha"]) == 2
