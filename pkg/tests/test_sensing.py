import numpy as np
import pytest
import scipy.sparse as sp

from linespec.sensing import (dirichlet, empirical_coherence, gabor_matrix, gabor_radar_operator,
                              gaussian_operator, hadamard_family, load_operator, mimo_radar_operator,
                              random_time_samples, save_operator, sors_operator, subsampled_orthogonal,
                              time_frequency_shift)
from linespec.spectral import frequency_indices, steering_matrix, steering_vector

ENSEMBLES = {
    "subsampled": lambda s: subsampled_orthogonal(16, 20, seed=s),
    "time_samples": lambda s: random_time_samples(16, 20, seed=s),
    "gaussian": lambda s: gaussian_operator(16, 20, seed=s),
    "sors": lambda s: sors_operator(16, 20, seed=s),
    "gabor": lambda s: gabor_radar_operator(N=4, seed=s),
    "mimo": lambda s: mimo_radar_operator(3, 3, 4, seed=s),
}


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.mark.parametrize("name", sorted(ENSEMBLES))
def test_adjoint_consistency(name):
    rng = np.random.default_rng(1)
    worst = 0.0
    for t in range(100):
        op = ENSEMBLES[name](t)
        x, y = _cplx(rng, op.n), _cplx(rng, op.M)
        lhs = np.vdot(y, op.forward(x))
        rhs = np.vdot(op.adjoint(y), x)
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)))
    assert worst <= 1e-10


def test_subsampled_identity_structure():
    N, M = 16, 20
    L = 2 * N + 1
    op = subsampled_orthogonal(N, M, seed=3)
    A = op.dense()
    assert np.all((np.abs(A) > 0).sum(axis=1) == 1)
    np.testing.assert_allclose(np.abs(A[np.abs(A) > 0]), np.sqrt(L / M))
    G = A.conj().T @ A
    np.testing.assert_allclose(G - np.diag(np.diag(G)), 0)
    mult = np.round(np.diag(G).real / (L / M))
    np.testing.assert_allclose(np.diag(G).real, mult * L / M, atol=1e-12)
    rep = empirical_coherence(op)
    assert rep.mu_hat == 1.0
    assert rep.isotropy_reference == "exhaustive"
    assert rep.isotropy_residual <= 1e-14


def test_subsampled_with_replacement_when_m_exceeds_l():
    op = subsampled_orthogonal(4, 30, seed=1)
    assert op.M == 30
    with pytest.raises(ValueError):
        subsampled_orthogonal(4, 30, seed=1, replace=False)


def test_subsampled_dft_family():
    op = subsampled_orthogonal(8, 10, seed=2, family="dft")
    # flat rows: ||a||_1^2 = L * ||a||_2^2, the worst case of the l1 coherence
    assert empirical_coherence(op).mu_hat == pytest.approx(17.0, rel=1e-12)
    with pytest.raises(ValueError):
        subsampled_orthogonal(2, 3, family=np.ones((5, 5)))


def test_dirichlet_integer_offsets():
    L = 17
    x = np.arange(-8, 9)
    np.testing.assert_allclose(dirichlet(x / L, L), (x == 0).astype(float), atol=1e-14)
    np.testing.assert_allclose(dirichlet(0.123, L), np.mean(np.exp(2j * np.pi * frequency_indices(8) * 0.123)).real)


def test_time_samples_match_continuous_evaluation():
    N, M = 12, 15
    L = 2 * N + 1
    op = random_time_samples(N, M, seed=7)
    rng = np.random.default_rng(0)
    j = rng.choice(np.arange(-N, N + 1), size=4, replace=False)
    nu = j / L
    b = _cplx(rng, 4)
    z = steering_matrix(np.mod(nu, 1.0), N) @ b
    t = np.asarray(op.params["t"])
    direct = np.sqrt(L / M) * np.exp(2j * np.pi * np.outer(t, nu)) @ b
    np.testing.assert_allclose(op.forward(z), direct, atol=1e-9)


def test_time_samples_row_l1_grows_like_log():
    for N in (8, 64, 512):
        L = 2 * N + 1
        op = random_time_samples(N, 50, seed=N)
        l1 = np.abs(op.dense()).sum(axis=1) * np.sqrt(50 / L)
        assert l1.max() <= 4 / np.pi ** 2 * np.log(L) + 3


def test_gaussian_isotropy_and_shape():
    op = gaussian_operator(8, 10, seed=0)
    assert op.shape == (10, 17)
    assert np.isrealobj(op.dense().real) and np.allclose(op.dense().imag, 0)
    x = np.random.default_rng(1).standard_normal(17)
    vals = [np.linalg.norm(gaussian_operator(8, 10, seed=s).forward(x)) ** 2 for s in range(10_000)]
    assert abs(np.mean(vals) / np.dot(x, x) - 1) < 0.05


def test_gaussian_singular_values():
    M, n = 200, 401
    sv = np.linalg.svd(gaussian_operator(200, M, seed=2).dense(), compute_uv=False)
    r = np.sqrt(M / n)
    lo, hi = np.sqrt(n / M) * (1 - r), np.sqrt(n / M) * (1 + r)
    assert sv.min() > 0.9 * lo and sv.max() < 1.1 * hi


def test_sors_family():
    op = sors_operator(16, 12, seed=5)
    n = op.params["n"]
    assert n == 64
    s = np.asarray(op.params["signs"])
    np.testing.assert_array_equal(s * s, 1.0)
    H = hadamard_family(n)
    np.testing.assert_allclose(H.T @ H, np.eye(n), atol=1e-10)
    U = op.row_family / np.sqrt(n / op.M)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(33), atol=1e-10)
    assert np.abs(H).max() == pytest.approx(1 / np.sqrt(n))
    with pytest.raises(ValueError):
        sors_operator(16, 12, n=32)
    with pytest.raises(ValueError):
        hadamard_family(12)


def test_gabor_zero_shift_returns_probe():
    op = gabor_radar_operator(N=5, seed=1)
    x = op.probes[0]
    np.testing.assert_allclose(op.forward(steering_vector((0.0, 0.0), 5, 2)), x, atol=1e-12)


def test_gabor_on_grid_shift():
    N = 6
    L = 2 * N + 1
    op = gabor_radar_operator(N=N, seed=2)
    x = op.probes[0]
    p = frequency_indices(N)
    for l0, k0 in [(1, 0), (3, 5), (12, 7), (0, 11)]:
        oracle = np.roll(x, l0) * np.exp(2j * np.pi * k0 * p / L)
        r = (l0 / L, k0 / L)
        np.testing.assert_allclose(op.forward(steering_vector(r, N, 2)), oracle, atol=1e-9)
        np.testing.assert_allclose(op.atoms([r])[:, 0], oracle, atol=1e-9)


def test_gabor_fast_path_matches_dense():
    op = gabor_radar_operator(N=5, seed=3)
    pts = np.random.default_rng(0).random((50, 2))
    np.testing.assert_allclose(op.atoms(pts), op.atoms_dense_path(pts), atol=1e-9)


def test_gabor_matrix_definition():
    x = np.random.default_rng(4).standard_normal(7)
    G = gabor_matrix(x)
    idx = np.arange(-3, 4)
    for p in (0, 4, 6):
        for k in (1, 5):
            for l in (2, 6):
                expect = x[(idx[p] - idx[l] + 3) % 7] * np.exp(2j * np.pi * idx[k] * idx[p] / 7)
                assert G[p, k * 7 + l] == pytest.approx(expect)


def test_gabor_length_errors():
    with pytest.raises(ValueError):
        gabor_radar_operator(np.ones(6))
    with pytest.raises(ValueError):
        gabor_radar_operator(np.ones(7), N=4)
    with pytest.raises(ValueError):
        gabor_radar_operator()


def _mimo_literal(probes, N_R, beta, tau, nu):
    # receive antenna r: sum_j e^{i 2 pi beta (r N_T + j - Nb)} F_nu T_tau x_j
    N_T, L = probes.shape
    Nb = (N_T * N_R - 1) // 2
    out = []
    for r in range(N_R):
        acc = 0
        for j in range(N_T):
            acc = acc + np.exp(2j * np.pi * beta * (r * N_T + j - Nb)) * time_frequency_shift(probes[j], tau, nu)
        out.append(acc)
    return np.concatenate(out)


def test_mimo_matches_literal_evaluation():
    N_T = N_R = 3
    N = 4
    L = 2 * N + 1
    op = mimo_radar_operator(N_T, N_R, N, seed=6)
    assert op.shape == (N_R * L, N_T * N_R * L * L)
    rng = np.random.default_rng(1)
    for _ in range(10):
        r = (rng.integers(9) / 9, rng.integers(L) / L, rng.integers(L) / L)
        lit = _mimo_literal(op.probes, N_R, *r)
        np.testing.assert_allclose(op.forward(steering_vector(r, op.N, 3)), lit, atol=1e-9)
    r = rng.random(3)
    np.testing.assert_allclose(op.atoms([r])[:, 0], _mimo_literal(op.probes, N_R, *r), atol=1e-9)
    np.testing.assert_allclose(op.atoms([r]), op.atoms_dense_path([r]), atol=1e-9)


def test_mimo_zero_angle_identical_antennas():
    op = mimo_radar_operator(3, 3, 4, seed=2)
    y = op.atoms([(0.0, 0.21, 0.37)])[:, 0].reshape(3, 9)
    np.testing.assert_allclose(y, np.repeat(y[:1], 3, axis=0), atol=1e-12)
    expect = sum(time_frequency_shift(x, 0.21, 0.37) for x in op.probes)
    np.testing.assert_allclose(y[0], expect, atol=1e-12)


def test_time_frequency_shift_on_grid():
    x = np.random.default_rng(0).standard_normal(9)
    np.testing.assert_allclose(time_frequency_shift(x, 2 / 9, 0.0), np.roll(x, 2), atol=1e-12)
    with pytest.raises(ValueError):
        time_frequency_shift(np.ones(8), 0.1, 0.1)


def test_mimo_rejects_even_array():
    with pytest.raises(ValueError):
        mimo_radar_operator(2, 2, 4)


def test_mimo_exact_isotropy():
    # A is linear in the probes, so E[c^2 A^H A] is a sum over basis probes
    N_T = N_R = 3
    N, L = 4, 9
    E = 0
    for i in range(N_T * L):
        P = np.zeros(N_T * L)
        P[i] = 1.0
        op = mimo_radar_operator(N_T, N_R, N, probes=P.reshape(N_T, L))
        A = op.dense() * op.isotropy_scale
        E = E + A.conj().T @ A / (N_T * L)
    assert np.linalg.norm(E - np.eye(E.shape[0]), 2) <= 1e-12


def _mimo_mc_isotropy(draws):
    acc = 0
    for s in range(draws):
        op = mimo_radar_operator(3, 3, 4, seed=s)
        A = op.matrix * op.isotropy_scale
        acc = acc + (A.conj().T @ A).toarray()
    return np.linalg.norm(acc / draws - np.eye(acc.shape[0]), 2)


@pytest.mark.xfail(strict=True, reason="500 draws leave Monte Carlo error near 0.4; see test_mimo_exact_isotropy")
def test_mimo_isotropy_500_draws():
    assert _mimo_mc_isotropy(500) <= 0.1


@pytest.mark.slow
def test_mimo_isotropy_many_draws():
    assert _mimo_mc_isotropy(20_000) <= 0.1


@pytest.mark.parametrize("name", sorted(ENSEMBLES))
def test_coherence_at_least_one(name):
    rep = empirical_coherence(ENSEMBLES[name](0), isotropy=False)
    assert rep.mu_hat >= 1 - 1e-9


def test_gaussian_coherence_matches_direct_norms():
    op = gaussian_operator(127, 64, seed=3)
    A = op.dense()
    assert empirical_coherence(op).mu_hat == pytest.approx(64 / 255 * np.abs(A).sum(axis=1).max() ** 2)


@pytest.mark.parametrize("name", sorted(ENSEMBLES))
def test_save_load_roundtrip(name, tmp_path):
    op = ENSEMBLES[name](11)
    save_operator(op, tmp_path / "op", dtype="complex128")
    back = load_operator(tmp_path / "op")
    A, B = op.dense(), back.dense()
    np.testing.assert_array_equal(A, B)
    assert back.ensemble == op.ensemble and back.N == op.N and back.seed == op.seed
    assert back.isotropy_scale == op.isotropy_scale
    assert sp.issparse(back.matrix) == sp.issparse(op.matrix)
    assert empirical_coherence(back) == empirical_coherence(op)


def test_seeded_reproducibility():
    for name, make in ENSEMBLES.items():
        a, b = make(5).dense(), make(5).dense()
        np.testing.assert_array_equal(a, b, err_msg=name)
