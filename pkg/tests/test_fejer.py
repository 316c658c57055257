import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linespec.fejer import KernelParams, gbar_eval, gm_matrix, gm_vector, kappa, kernel_coeffs, kernel_eval
from linespec.spectral import steering_derivative


def fejer_closed(t, N):
    # direct sine quotient, away from integers only
    R = N // 2 + 1
    return (np.sin(R * np.pi * t) / (R * np.sin(np.pi * t))) ** 4


def test_odd_or_small_n_rejected():
    for N in (3, 0, -2, 2.5):
        with pytest.raises(ValueError):
            KernelParams(N)


@pytest.mark.parametrize("N", [2, 4, 16, 64])
def test_coefficients_match_fft_of_samples(N):
    # sample F on L points and take the DFT: exact for a degree-N polynomial
    p = KernelParams(N)
    L = 2 * N + 1
    t = np.arange(L) / L
    vals = np.where(t == 0, 1.0, fejer_closed(np.where(t == 0, 0.5, t), N))
    c = np.fft.fft(vals) / L                      # c_k for k = 0..L-1
    k = np.arange(-N, N + 1)
    oracle = np.real(c[k % L]) * p.R
    np.testing.assert_allclose(p.coeffs.g, oracle, atol=1e-12)


@pytest.mark.parametrize("N", [2, 4, 16, 64, 128])
def test_coefficient_sum_and_bounds(N):
    c = kernel_coeffs(KernelParams(N))
    assert int(c.weights.sum()) == c.R ** 4
    assert c.g.sum() == pytest.approx(c.R, rel=1e-15)
    assert np.abs(c.g).max() <= 1.0
    np.testing.assert_array_equal(c.weights, c.weights[::-1])


def test_kappa_value():
    assert kappa(KernelParams(4)) ** 2 == pytest.approx(105.2758, abs=1e-4)
    for N in (4, 16, 64):
        p = KernelParams(N)
        assert abs(kernel_eval(0.0, p, 2)) == pytest.approx(kappa(p) ** 2, rel=1e-9)


@pytest.mark.parametrize("order", range(5))
def test_closed_form_matches_series(order):
    p = KernelParams(16)
    t = np.random.default_rng(order).random(1000)
    t = np.concatenate([t, [0.0, 1e-9, -1e-7, 0.5, 1.0, 2.0]])
    scale = kappa(p) ** order
    np.testing.assert_allclose(kernel_eval(t, p, order), kernel_eval(t, p, order, "series"), atol=1e-10 * scale)


@given(st.floats(-3, 3, allow_nan=False), st.sampled_from([2, 4, 8, 16]))
def test_periodic(t, N):
    p = KernelParams(N)
    assert kernel_eval(t + 1.0, p) == pytest.approx(kernel_eval(t, p), abs=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_derivative_finite_difference(order):
    p = KernelParams(8)
    h = 1e-6
    for t in (0.031, 0.17, 0.41):
        fd = (kernel_eval(t + h, p, order - 1) - kernel_eval(t - h, p, order - 1)) / (2 * h)
        exact = kernel_eval(t, p, order)
        assert abs(fd - exact) <= 1e-5 * max(abs(exact), kappa(p) ** order * 1e-3)


def test_method_and_order_errors():
    p = KernelParams(4)
    with pytest.raises(ValueError):
        kernel_eval(0.1, p, 5)
    with pytest.raises(ValueError):
        kernel_eval(0.1, p, 0, "bogus")


def test_gbar_is_product():
    p = KernelParams(6)
    r = np.array([0.03, -0.07, 0.21])
    expected = kernel_eval(r[0], p, 1) * kernel_eval(r[1], p, 0) * kernel_eval(r[2], p, 2)
    assert gbar_eval(r, (1, 0, 2), p) == pytest.approx(expected, rel=1e-13)
    assert gbar_eval(np.vstack([r, r]), (1, 0, 2), p).shape == (2,)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_reproducing_identity(d):
    p = KernelParams(8)
    kap = kappa(p)
    rng = np.random.default_rng(d)
    idx = [m for m in np.ndindex(*(3,) * d) if sum(m) <= 2]
    for _ in range(4):
        rk, r = rng.random(d), rng.random(d)
        for m in idx:
            g = gm_vector(rk, m, p, d)
            for n in idx:
                if sum(m) + sum(n) > 4 or sum(n) > 3:
                    continue
                lhs = np.vdot(g, steering_derivative(r, n, p.N, d))
                rhs = gbar_eval(r - rk, tuple(a + b for a, b in zip(m, n)), p, d)
                assert abs(lhs - rhs) <= 1e-8 * kap ** (sum(m) + sum(n))


def test_gm_matrix_columns():
    p = KernelParams(4)
    pts = np.array([[0.1, 0.2], [0.5, 0.9]])
    G = gm_matrix(pts, (1, 0), p)
    assert G.shape == (81, 2)
    np.testing.assert_allclose(G[:, 1], gm_vector(pts[1], (1, 0), p))
    with pytest.raises(ValueError):
        gm_matrix(pts, (2, 1), p)
