"""Steering vectors, sinusoid mixtures and wrap-around geometry.

Conventions used throughout the package:

* A frequency point ``r`` lives on the torus ``[0, 1)^d`` with ``d <= 3``.
  In three dimensions the coordinates are read as ``(beta, tau, nu)``.
* The steering vector ``f(r)`` has entries ``exp(i 2 pi <p, r>)`` for the
  integer multi-index ``p`` with ``-N_l <= p_l <= N_l``. Entries are stored in
  lexicographic order with the first coordinate varying slowest, which is the
  ordering produced by ``np.kron(f_1, f_2, f_3)``.
* Inner products are ``<x, y> = y^H x`` (linear in the first argument).

Half-widths may differ per coordinate (``N`` can be a tuple). Everything in the
certificate code uses a common ``N``; the MIMO operator does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from ._rng import SeedLike, make_rng

MAX_DIM = 3
TWO_PI = 2.0 * np.pi

__all__ = [
    "FrequencyPoint",
    "Mixture",
    "SeparationReport",
    "as_points",
    "half_widths",
    "frequency_indices",
    "wrap_distance",
    "wrap_diff",
    "steering_vector",
    "steering_matrix",
    "steering_derivative",
    "synthesize",
    "check_separation",
    "default_separation",
    "random_signs",
    "inner",
]


def half_widths(N, d: int) -> tuple[int, ...]:
    """Normalize ``N`` (int or length-``d`` sequence) to a tuple of ints."""
    if d < 1 or d > MAX_DIM:
        raise ValueError(f"unsupported dimension d={d}; need 1 <= d <= {MAX_DIM}")
    if np.isscalar(N):
        Ns = (int(N),) * d
    else:
        Ns = tuple(int(n) for n in N)
        if len(Ns) != d:
            raise ValueError(f"got {len(Ns)} half-widths for dimension {d}")
    if any(n < 0 for n in Ns):
        raise ValueError("half-widths must be non-negative")
    return Ns


def frequency_indices(N: int) -> np.ndarray:
    """Integer indices ``-N..N`` as a float array."""
    return np.arange(-N, N + 1, dtype=float)


def as_points(points, d: int | None = None) -> np.ndarray:
    """Coerce points to a float array of shape ``(S, d)`` reduced mod 1.

    A 1-D input is read as ``S`` scalar points when ``d`` is 1 or None and as
    a single point otherwise.
    """
    if isinstance(points, FrequencyPoint):
        arr = np.asarray(points.coords, dtype=float)[None, :]
    elif isinstance(points, (list, tuple)) and points and isinstance(points[0], FrequencyPoint):
        arr = np.array([p.coords for p in points], dtype=float)
    else:
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr[:, None] if (d is None or d == 1) else arr[None, :]
    if arr.ndim != 2:
        raise ValueError("points must be an (S, d) array")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"points have dimension {arr.shape[1]}, expected {d}")
    if arr.shape[1] < 1 or arr.shape[1] > MAX_DIM:
        raise ValueError(f"unsupported dimension d={arr.shape[1]}")
    return np.mod(arr, 1.0)


@dataclass(frozen=True)
class FrequencyPoint:
    """A point on the unit torus; coordinates are reduced mod 1."""

    coords: tuple[float, ...]

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if c.ndim != 1 or not 1 <= c.size <= MAX_DIM:
            raise ValueError(f"unsupported dimension d={c.size}")
        object.__setattr__(self, "coords", tuple(float(x) for x in np.mod(c, 1.0)))

    @property
    def d(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def close_to(self, other: "FrequencyPoint", tol: float = 1e-12) -> bool:
        return bool(np.all(wrap_distance(self.coords, other.coords) < tol))


def wrap_diff(a, b):
    """Signed circular difference ``a - b`` mapped into ``[-1/2, 1/2)``."""
    return np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + 0.5, 1.0) - 0.5


def wrap_distance(a, b):
    """Wrap-around distance ``min(|a-b|, 1-|a-b|)`` on the unit circle.

    Broadcasts over array inputs.

    >>> float(wrap_distance(0.75, 0.5))
    0.25
    """
    t = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 1.0)
    return np.minimum(t, 1.0 - t)


def _axis_factors(points: np.ndarray, Ns: Sequence[int]) -> list[np.ndarray]:
    # per-axis exponentials, each of shape (S, 2N_l+1)
    return [np.exp(1j * TWO_PI * points[:, l, None] * frequency_indices(n)[None, :])
            for l, n in enumerate(Ns)]


def _kron_rows(factors: list[np.ndarray]) -> np.ndarray:
    # row-wise Kronecker product, first factor slowest
    def k2(a, b):
        return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)
    return reduce(k2, factors)


def steering_matrix(points, N, d: int | None = None) -> np.ndarray:
    """Matrix whose columns are ``f(r_k)`` for the given points.

    Args:
        points: ``(S, d)`` array (or anything :func:`as_points` accepts).
        N: Half-width, scalar or per coordinate.
        d: Dimension; inferred from ``points`` when omitted.

    Returns:
        Complex array of shape ``(prod(2N_l+1), S)``.
    """
    pts = as_points(points, d)
    Ns = half_widths(N, pts.shape[1])
    return _kron_rows(_axis_factors(pts, Ns)).T


def steering_vector(r, N, d: int | None = None) -> np.ndarray:
    """Steering vector ``f(r)`` of length ``prod(2N_l+1)``."""
    if d is None:
        d = r.d if isinstance(r, FrequencyPoint) else max(np.size(r), 1)
    pts = as_points(r, d)
    if pts.shape[0] != 1:
        raise ValueError("steering_vector takes a single point; use steering_matrix")
    return steering_matrix(pts, N)[:, 0]


def steering_derivative(r, n, N, d: int | None = None, conjugate: bool = False) -> np.ndarray:
    """Partial derivative ``d^n f(r)`` for the multi-index ``n``.

    Entry ``p`` equals ``prod_l (i 2 pi p_l)^{n_l} exp(i 2 pi <p, r>)``.
    With ``conjugate=True`` the conjugate-phase form
    ``prod_l (-i 2 pi p_l)^{n_l} exp(-i 2 pi <p, r>)`` is returned instead,
    i.e. the derivative of ``conj(f)``.

    Args:
        r: A single frequency point.
        n: Multi-index (int allowed when d = 1), with ``sum(n) <= 3``.
        N: Half-width(s).
        d: Dimension; inferred from ``r`` when omitted.
        conjugate: Select the conjugate-phase form.
    """
    n = (int(n),) if np.isscalar(n) else tuple(int(k) for k in n)
    if d is None:
        d = len(n)
    pts = as_points(r, d)
    if pts.shape[0] != 1:
        raise ValueError("steering_derivative takes a single point")
    if len(n) != d or any(k < 0 for k in n):
        raise ValueError(f"multi-index {n} does not match dimension {d}")
    if sum(n) > 3:
        raise ValueError(f"derivative order {sum(n)} too high (max 3)")
    Ns = half_widths(N, d)
    sign = -1.0 if conjugate else 1.0
    factors = []
    for l, (k, nl) in enumerate(zip(n, Ns)):
        p = frequency_indices(nl)
        e = np.exp(sign * 1j * TWO_PI * p * pts[0, l])
        factors.append(((sign * 1j * TWO_PI * p) ** k * e)[None, :])
    return _kron_rows(factors)[0]


def inner(x, y) -> complex:
    """``<x, y> = y^H x``."""
    return complex(np.vdot(y, x))


@dataclass(frozen=True, eq=False)
class Mixture:
    """Sparse mixture ``z = sum_k b_k f(r_k)``.

    Attributes:
        amplitudes: Complex array of shape ``(S,)``.
        locations: Float array of shape ``(S, d)``, reduced mod 1.
        N: Half-width (int, or tuple for anisotropic ambient spaces).
    """

    amplitudes: np.ndarray
    locations: np.ndarray
    N: int | tuple[int, ...] = field(default=1)

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim <= 1 and b.size == 1:
            loc = loc.reshape(1, -1)          # one point, any dimension
        r = as_points(loc)
        if r.shape[0] != b.size:
            raise ValueError(f"{b.size} amplitudes but {r.shape[0]} locations")
        if b.size < 1:
            raise ValueError("a mixture needs at least one component")
        Ns = half_widths(self.N, r.shape[1])
        if any(n < 1 for n in Ns):
            raise ValueError("half-bandwidth N must be a positive integer")
        b.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "amplitudes", b)
        object.__setattr__(self, "locations", r)
        object.__setattr__(self, "N", Ns[0] if len(set(Ns)) == 1 else Ns)

    @classmethod
    def from_components(cls, components, N) -> "Mixture":
        """Build from ``[(amplitude, location), ...]`` pairs."""
        amps = [c[0] for c in components]
        locs = [np.atleast_1d(np.asarray(c[1].coords if isinstance(c[1], FrequencyPoint) else c[1], dtype=float))
                for c in components]
        return cls(np.array(amps, dtype=complex), np.vstack(locs), N)

    @property
    def S(self) -> int:
        return self.amplitudes.size

    @property
    def d(self) -> int:
        return self.locations.shape[1]

    @property
    def half_widths(self) -> tuple[int, ...]:
        return half_widths(self.N, self.d)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(2 * n + 1 for n in self.half_widths)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def components(self) -> list[tuple[complex, FrequencyPoint]]:
        return [(complex(b), FrequencyPoint(tuple(r))) for b, r in zip(self.amplitudes, self.locations)]

    def synthesize(self) -> np.ndarray:
        return synthesize(self)


def synthesize(m: Mixture) -> np.ndarray:
    """Return ``z = sum_k b_k f(r_k)``."""
    return steering_matrix(m.locations, m.N) @ m.amplitudes


@dataclass(frozen=True)
class SeparationReport:
    """Outcome of a separation check.

    ``min_pairwise`` is the smallest, over pairs, of the largest coordinate
    wrap distance. ``min_ratio`` is the same quantity after dividing each
    coordinate by its threshold; ``satisfied`` is ``min_ratio >= 1``.
    """

    min_pairwise: float
    min_ratio: float
    satisfied: bool
    thresholds: tuple[float, ...]
    form: str
    closest_pair: tuple[int, int] | None


def default_separation(N: int, d: int) -> float:
    """Default minimum separation: ``2/N`` in one dimension, ``5/N`` otherwise."""
    return (2.0 if d == 1 else 5.0) / N


def check_separation(points, N=None, thresholds=None, form: str = "max",
                     rtol: float = 1e-12) -> SeparationReport:
    """Check pairwise minimum separation on the torus.

    Args:
        points: ``(S, d)`` points.
        N: Half-width used for the default thresholds when ``thresholds`` is
            None.
        thresholds: Scalar or per-coordinate thresholds.
        form: ``"max"`` - a pair passes when ``max_l dist_l / thr_l >= 1``.
            ``"or"`` - a pair passes when some coordinate has
            ``dist_l >= thr_l``. The two are equivalent; the label is kept for
            reporting.
        rtol: Relative slack for boundary cases such as separation exactly
            ``2/N``.
    """
    if form not in ("max", "or"):
        raise ValueError(f"unknown separation form {form!r}")
    pts = as_points(points)
    S, d = pts.shape
    if thresholds is None:
        if N is None:
            raise ValueError("need N or explicit thresholds")
        thresholds = default_separation(N, d)
    thr = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if thr.size == 1:
        thr = np.repeat(thr, d)
    if thr.size != d:
        raise ValueError(f"{thr.size} thresholds for dimension {d}")
    if S < 2:
        return SeparationReport(np.inf, np.inf, True, tuple(thr), form, None)
    dist = wrap_distance(pts[:, None, :], pts[None, :, :])        # (S, S, d)
    pair_max = dist.max(axis=2)
    pair_ratio = (dist / thr).max(axis=2)
    iu = np.triu_indices(S, 1)
    k = int(np.argmin(pair_ratio[iu]))
    i, j = int(iu[0][k]), int(iu[1][k])
    min_ratio = float(pair_ratio[i, j])
    return SeparationReport(float(pair_max[iu].min()), min_ratio, bool(min_ratio >= 1.0 - rtol),
                            tuple(float(t) for t in thr), form, (i, j))


def random_signs(S: int, seed: SeedLike = None) -> np.ndarray:
    """``S`` i.i.d. phases drawn uniformly on the complex unit circle."""
    if S < 1:
        raise ValueError("S must be positive")
    rng = make_rng(seed, "signs")
    return np.exp(1j * TWO_PI * rng.random(S))
