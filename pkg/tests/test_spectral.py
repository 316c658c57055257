import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linespec.spectral import (FrequencyPoint, Mixture, as_points, check_separation, frequency_indices,
                               random_signs, steering_derivative, steering_matrix, steering_vector,
                               synthesize, wrap_diff, wrap_distance)

unit = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)


def test_wrap_distance_examples():
    assert wrap_distance(3 / 4, 1 / 2) == pytest.approx(1 / 4, abs=1e-15)
    assert wrap_distance(5 / 6, 1 / 6) == pytest.approx(1 / 3, abs=1e-15)
    assert wrap_distance(0.37, 0.37) == 0.0


@given(unit, unit, unit)
def test_wrap_distance_is_a_metric(a, b, c):
    dab = wrap_distance(a, b)
    assert 0.0 <= dab <= 0.5
    assert dab == pytest.approx(wrap_distance(b, a), abs=1e-15)
    assert dab <= wrap_distance(a, c) + wrap_distance(c, b) + 1e-12


@given(unit, unit)
def test_wrap_diff_range(a, b):
    d = wrap_diff(a, b)
    assert -0.5 <= d < 0.5
    assert abs(abs(d) - wrap_distance(a, b)) < 1e-12


def test_frequency_point_reduces_mod_one():
    p = FrequencyPoint((1.25, -0.25))
    assert p.coords == (0.25, 0.75)
    assert p.close_to(FrequencyPoint((0.25, 0.75)))
    with pytest.raises(ValueError):
        FrequencyPoint((0.1, 0.2, 0.3, 0.4))


def test_steering_examples():
    np.testing.assert_array_equal(steering_vector(0.0, 5), np.ones(11))
    p = frequency_indices(4)
    np.testing.assert_allclose(steering_vector(0.5, 4), (-1.0) ** p, atol=1e-14)
    f = steering_vector((0.1, 0.2, 0.3), 2, d=3)
    assert f.shape == (125,)
    assert np.vdot(f, f).real == pytest.approx(125.0)


def test_steering_layout_is_kron():
    r = (0.13, 0.71, 0.42)
    fs = [steering_vector(c, 3) for c in r]
    np.testing.assert_allclose(steering_vector(r, 3, d=3), np.kron(np.kron(fs[0], fs[1]), fs[2]), atol=1e-13)


def test_unsupported_dimension():
    with pytest.raises(ValueError):
        steering_vector(np.zeros(4), 2, d=4)


@given(st.lists(unit, min_size=1, max_size=3), st.integers(1, 6))
def test_steering_norm(r, N):
    f = steering_vector(np.array(r), N, d=len(r))
    assert np.vdot(f, f).real == pytest.approx((2 * N + 1) ** len(r), rel=1e-12)


@pytest.mark.parametrize("n", [(1,), (2,), (3,), (1, 0), (0, 1), (1, 1), (2, 1), (1, 1, 1), (0, 0, 2)])
def test_steering_derivative_central_difference(n):
    d = len(n)
    rng = np.random.default_rng(sum(n) * 10 + d)
    r = rng.random(d)
    N = 4
    h = 1e-5
    # lower one order of n along its first nonzero axis and difference that
    ax = next(i for i, k in enumerate(n) if k)
    lower = tuple(k - (i == ax) for i, k in enumerate(n))
    e = np.zeros(d)
    e[ax] = h
    fd = (steering_derivative(r + e, lower, N, d) - steering_derivative(r - e, lower, N, d)) / (2 * h)
    exact = steering_derivative(r, n, N, d)
    assert np.linalg.norm(fd - exact) / np.linalg.norm(exact) <= 1e-6


def test_steering_derivative_conjugate_convention():
    N, r = 5, 0.217
    p = frequency_indices(N)
    f = steering_vector(r, N)
    np.testing.assert_allclose(steering_derivative(r, 0, N, conjugate=True), f.conj(), atol=1e-14)
    np.testing.assert_allclose(steering_derivative(r, 1, N, conjugate=True), -1j * 2 * np.pi * p * f.conj(), atol=1e-12)
    np.testing.assert_allclose(steering_derivative(r, 0, N), f, atol=1e-14)
    with pytest.raises(ValueError):
        steering_derivative(r, 4, N)


def test_synthesize_examples():
    np.testing.assert_allclose(synthesize(Mixture([1.0], [[0.0]], 6)), np.ones(13))
    np.testing.assert_array_equal(synthesize(Mixture([0.0, 0.0], [[0.1], [0.6]], 6)), np.zeros(13))
    m = Mixture([1 + 1j, -0.5], [[0.1], [0.6]], 6)
    parts = sum(synthesize(Mixture([b], [r], 6)) for b, r in zip(m.amplitudes, m.locations))
    np.testing.assert_allclose(synthesize(m), parts, atol=1e-13)


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.lists(unit, min_size=2, max_size=2))
def test_synthesize_linear(alpha, locs):
    pts = np.array(locs)[:, None]
    rng = np.random.default_rng(0)
    b1, b2 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    lhs = synthesize(Mixture(alpha * b1 + b2, pts, 4))
    rhs = alpha * synthesize(Mixture(b1, pts, 4)) + synthesize(Mixture(b2, pts, 4))
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + abs(alpha)))


def test_mixture_validation():
    with pytest.raises(ValueError):
        Mixture([1.0, 2.0], [[0.1]], 4)
    with pytest.raises(ValueError):
        Mixture([1.0], [[0.1]], 0)
    m = Mixture([1.0], [0.1, 0.2, 0.3], 2)
    assert m.d == 3 and m.size == 125


def test_separation_examples():
    N = 16
    assert check_separation([[0.0], [2 / N]], N, 2 / N).satisfied
    assert not check_separation([[0.0], [1.9 / N]], N, 2 / N).satisfied
    pts = np.array([[0.1, 0.1, 0.1], [0.1 + 5 / N, 0.1, 0.1]])
    rep = check_separation(pts, N, (5 / N,) * 3)
    assert rep.satisfied and rep.form == "max"
    assert check_separation([[0.3]], N).satisfied
    with pytest.raises(ValueError):
        check_separation(pts, N, (0.1, 0.1))


def test_separation_wraps():
    assert check_separation([[0.01], [0.99]], 16, 0.02).satisfied
    assert not check_separation([[0.01], [0.99]], 16, 0.03).satisfied


def test_random_signs():
    u = random_signs(1000, seed=4)
    np.testing.assert_allclose(np.abs(u), 1.0, atol=1e-15)
    np.testing.assert_array_equal(u, random_signs(1000, seed=4))
    assert abs(random_signs(100_000, seed=5).mean()) <= 0.02
    with pytest.raises(ValueError):
        random_signs(0)


def test_as_points_shapes():
    assert as_points([0.1, 0.2]).shape == (2, 1)
    assert as_points([0.1, 0.2], d=2).shape == (1, 2)
    assert steering_matrix([[0.1], [0.3]], 3).shape == (7, 2)
