"""Squared Fejér kernel and the coefficient vectors built from it.

The kernel is

    F(t) = (sin(R pi t) / (R sin(pi t)))^4 = (1/R) sum_{k=-N}^{N} g_k e^{i 2 pi k t},

with ``N`` even and ``R = N/2 + 1``. The tensor kernel is
``Gbar(r) = prod_l F(r_l)``.

Coefficient vectors ``g_m(r)`` follow the package inner-product convention
``<x, y> = y^H x`` so that ``<g_m(r_k), d^n f(r)> = Gbar^{(m+n)}(r - r_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np

from .spectral import TWO_PI, _kron_rows, as_points, frequency_indices

__all__ = [
    "KernelParams",
    "KernelCoeffs",
    "kernel_coeffs",
    "kernel_eval",
    "kappa",
    "gbar_eval",
    "gm_vector",
    "gm_matrix",
]

MAX_KERNEL_ORDER = 4
# Below this distance to the nearest integer, times N, evaluate by Taylor series.
_TAYLOR_RADIUS = 0.05
_TAYLOR_TERMS = 12


@dataclass(frozen=True)
class KernelParams:
    """Kernel size. ``N`` must be even and positive."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise ValueError(f"the Fejér kernel needs an even N >= 2, got N={self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def R(self) -> int:
        return self.N // 2 + 1

    @property
    def L(self) -> int:
        return 2 * self.N + 1

    @cached_property
    def coeffs(self) -> "KernelCoeffs":
        return kernel_coeffs(self)

    @cached_property
    def moments(self) -> np.ndarray:
        """``F^{(j)}(0)`` for ``j < MAX_KERNEL_ORDER + _TAYLOR_TERMS``."""
        k = frequency_indices(self.N)
        w = self.coeffs.g / self.R
        j = np.arange(MAX_KERNEL_ORDER + _TAYLOR_TERMS)
        # odd moments vanish by symmetry; even ones are real and alternate in sign
        vals = [(w * (TWO_PI * k) ** jj).sum() * np.real(1j ** jj) for jj in j]
        return np.array(vals)


@dataclass(frozen=True)
class KernelCoeffs:
    """Fourier coefficients ``g_k`` for ``k = -N..N``.

    ``weights`` are the exact integer convolution weights; ``g = weights / R**3``.
    """

    N: int
    R: int
    weights: np.ndarray
    g: np.ndarray

    @property
    def k(self) -> np.ndarray:
        return frequency_indices(self.N)


def kernel_coeffs(params: KernelParams) -> KernelCoeffs:
    """Coefficients from the self-convolution of the triangular Fejér sequence."""
    R = params.R
    tri = R - np.abs(np.arange(-(R - 1), R, dtype=np.int64))
    w = np.convolve(tri, tri)                  # length 2(2R-1)-1 = 2N+1, exact integers
    assert w.size == params.L and int(w.sum()) == R ** 4
    w.setflags(write=False)
    g = w / float(R) ** 3
    g.setflags(write=False)
    return KernelCoeffs(params.N, R, w, g)


def _series(t: np.ndarray, params: KernelParams, order: int) -> np.ndarray:
    k = frequency_indices(params.N)
    w = params.coeffs.g / params.R * (TWO_PI * k) ** order
    arg = TWO_PI * np.multiply.outer(t, k)
    # d^o/dt^o of cos(2 pi k t), using the symmetry g_k = g_-k
    if order % 4 == 0:
        basis = np.cos(arg)
    elif order % 4 == 1:
        basis = -np.sin(arg)
    elif order % 4 == 2:
        basis = -np.cos(arg)
    else:
        basis = np.sin(arg)
    return basis @ w


def _quotient(t: np.ndarray, params: KernelParams, order: int) -> np.ndarray:
    # F = s^4 with s = u / v, u = sin(R pi t), v = R sin(pi t); Leibniz on u = s v
    R = params.R
    a, b = R * np.pi, np.pi
    sa, ca, sb, cb = np.sin(a * t), np.cos(a * t), np.sin(b * t), np.cos(b * t)
    u = [sa, a * ca, -a ** 2 * sa, -a ** 3 * ca, a ** 4 * sa]
    v = [R * sb, R * b * cb, -R * b ** 2 * sb, -R * b ** 3 * cb, R * b ** 4 * sb]
    s = [u[0] / v[0]]
    for n in range(1, order + 1):
        acc = u[n] - sum(comb(n, j) * s[j] * v[n - j] for j in range(n))
        s.append(acc / v[0])
    q = [sum(comb(n, j) * s[j] * s[n - j] for j in range(n + 1)) for n in range(order + 1)]
    return sum(comb(order, j) * q[j] * q[order - j] for j in range(order + 1))


def _taylor(delta: np.ndarray, params: KernelParams, order: int) -> np.ndarray:
    mom = params.moments
    out = np.zeros_like(delta)
    for j in range(_TAYLOR_TERMS - 1, -1, -1):   # Horner
        out = out * delta / (j + 1) + mom[order + j]
    return out


def kernel_eval(t, params: KernelParams, order: int = 0, method: str = "closed"):
    """Evaluate ``F^{(order)}(t)``.

    Args:
        t: Scalar or array of real arguments.
        params: Kernel size.
        order: Derivative order, 0 to 4.
        method: ``"closed"`` uses the sine-quotient form, switching to a Taylor
            series about the nearest integer where that form loses accuracy.
            ``"series"`` sums the Fourier expansion directly.

    Returns:
        Real value(s) with the shape of ``t``.
    """
    if not 0 <= order <= MAX_KERNEL_ORDER:
        raise ValueError(f"kernel derivative order must be in 0..{MAX_KERNEL_ORDER}")
    t_arr = np.asarray(t, dtype=float)
    if method == "series":
        out = _series(t_arr, params, order)
    elif method == "closed":
        delta = t_arr - np.round(t_arr)
        near = np.abs(delta) * params.N < _TAYLOR_RADIUS
        out = np.empty_like(delta)
        if np.any(near):
            out[near] = _taylor(delta[near], params, order)
        if not np.all(near):
            out[~near] = _quotient(delta[~near], params, order)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out) if np.ndim(out) == 0 else out


def kappa(params: KernelParams) -> float:
    """``kappa = sqrt(|F''(0)|) = sqrt(pi^2/3 (N^2 + 4N))``."""
    N = params.N
    return float(np.sqrt(np.pi ** 2 / 3.0 * (N * N + 4 * N)))


def _multi_index(n, d: int) -> tuple[int, ...]:
    n = (int(n),) if np.isscalar(n) else tuple(int(k) for k in n)
    if len(n) != d or any(k < 0 for k in n):
        raise ValueError(f"multi-index {n} does not match dimension {d}")
    return n


def gbar_eval(r, n, params: KernelParams, d: int | None = None):
    """``Gbar^{(n)}(r) = prod_l F^{(n_l)}(r_l)``.

    ``r`` may hold several points, shape ``(P, d)``; the result then has
    shape ``(P,)``. For a single point a float is returned.
    """
    n_t = (int(n),) if np.isscalar(n) else tuple(int(k) for k in n)
    d = d or len(n_t)
    n_t = _multi_index(n_t, d)
    if sum(n_t) > 4:
        raise ValueError(f"order {sum(n_t)} too high (max 4)")
    single = np.ndim(r) == 0 or (np.ndim(r) == 1 and d > 1)
    # do not reduce mod 1 here: F is 1-periodic, so it makes no difference
    pts = np.asarray(r, dtype=float).reshape(-1, d)
    val = np.ones(pts.shape[0])
    for l, k in enumerate(n_t):
        val = val * kernel_eval(pts[:, l], params, k)
    return float(val[0]) if single else val


def gm_matrix(points, m, params: KernelParams, d: int | None = None) -> np.ndarray:
    """Columns ``g_m(r_k)`` for several points, shape ``(L^d, S)``.

    Entry ``p`` of ``g_m(r)`` is ``prod_l (g_{p_l}/R) (-i 2 pi p_l)^{m_l} e^{i 2 pi p_l r_l}``.
    """
    m_t = (int(m),) if np.isscalar(m) else tuple(int(k) for k in m)
    d = d or len(m_t)
    m_t = _multi_index(m_t, d)
    if sum(m_t) > 2:
        raise ValueError(f"order {sum(m_t)} too high (max 2)")
    pts = as_points(points, d)
    p = frequency_indices(params.N)
    base = params.coeffs.g / params.R
    factors = [(base * (-1j * TWO_PI * p) ** m_t[l])[None, :]
               * np.exp(1j * TWO_PI * pts[:, l, None] * p[None, :]) for l in range(d)]
    return _kron_rows(factors).T


def gm_vector(r, m, params: KernelParams, d: int | None = None) -> np.ndarray:
    """Coefficient vector ``g_m(r)`` of length ``L^d``."""
    m_t = (int(m),) if np.isscalar(m) else tuple(int(k) for k in m)
    d = d or len(m_t)
    return gm_matrix(np.asarray(r, dtype=float).reshape(1, d), m_t, params, d)[:, 0]
