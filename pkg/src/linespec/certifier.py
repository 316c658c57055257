"""Dual certificates built from the squared Fejér kernel.

A certificate is a trigonometric polynomial ``Q(r) = <w, f(r)> = f(r)^H w``
with coefficient vector ``w`` of length ``L^d``. It interpolates unit-modulus
signs ``u_k`` on the support with vanishing gradient:

    Q(r_k) = u_k,   grad Q(r_k) = 0.

Deterministic:  ``w = sum_k a_k g_0(r_k) + sum_l a_lk g_{e_l}(r_k)``, so that
                ``Q(r) = sum_k a_k Gbar(r - r_k) + a_lk Gbar^{(e_l)}(r - r_k)``.
Random:         ``w = A^H A h`` with ``h`` the same combination, where ``A``
                is rescaled so that ``E[A^H A] = I``. Then ``Q(r) = <A h, A f(r)>``
                lies in the row space of ``A``.

In both cases the coefficients solve the kappa-scaled system
``D [a; kappa a_1; ...; kappa a_d] = [u; 0; ...; 0]``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .fejer import KernelParams, gbar_eval, gm_matrix, kappa
from .gridlab import GridSpec, fgrid_adjoint
from .sensing import MeasurementOperator
from .spectral import (TWO_PI, as_points, check_separation, default_separation, frequency_indices,
                       steering_matrix, wrap_distance)

__all__ = [
    "CertificateProblem",
    "InterpolationSystem",
    "CertificatePolynomial",
    "CertifiedBound",
    "NearRegionReport",
    "DiscreteCertificate",
    "SeparationError",
    "SingularSystemError",
    "GridTooCoarseError",
    "build_deterministic_certificate",
    "build_random_certificate",
    "build_certificate",
    "certify_sup_bound",
    "near_region_check",
    "discrete_certificate",
    "NEAR_RADIUS",
    "fine_spacing_grid_size",
]

SCHEMA_VERSION = 1
NEAR_RADIUS = 0.2447        # near-region half-width, in units of 1/N
FAR_BOUND = 0.99


class SeparationError(ValueError):
    """Support violates the minimum separation condition."""


class SingularSystemError(np.linalg.LinAlgError):
    """Interpolation system is numerically singular."""


class GridTooCoarseError(ValueError):
    """Bernstein lift needs ``pi N d h < 1``; densify the grid."""


def _unit_indices(d: int) -> list[tuple[int, ...]]:
    rows = [(0,) * d]
    for l in range(d):
        e = [0] * d
        e[l] = 1
        rows.append(tuple(e))
    return rows


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


@dataclass(frozen=True, eq=False)
class CertificateProblem:
    """Support, signs and kernel size for a certificate.

    Attributes:
        support: ``(S, d)`` support points.
        signs: ``(S,)`` unit-modulus signs.
        N: Even kernel half-width.
        mode: ``"deterministic"`` or ``"random"``.
        operator: Measurement operator for the random mode.
        separation: Minimum separation; defaults to ``2/N`` (d = 1) or
            ``5/N`` (max form, d = 2, 3).
        enforce_separation: Raise :class:`SeparationError` when violated.
    """

    support: np.ndarray
    signs: np.ndarray
    N: int
    mode: str = "deterministic"
    operator: MeasurementOperator | None = None
    separation: float | None = None
    enforce_separation: bool = True

    def __post_init__(self):
        T = as_points(self.support, None if np.ndim(self.support) != 1 else 1)
        u = np.atleast_1d(np.asarray(self.signs, dtype=complex))
        if u.size != T.shape[0]:
            raise ValueError(f"{u.size} signs for {T.shape[0]} support points")
        if not np.allclose(np.abs(u), 1.0, atol=1e-12):
            raise ValueError("signs must have unit modulus")
        if self.mode not in ("deterministic", "random"):
            raise ValueError(f"unknown certificate mode {self.mode!r}")
        if self.mode == "random":
            if self.operator is None:
                raise ValueError("random mode needs a measurement operator")
            if tuple(self.operator.N) != (int(self.N),) * T.shape[1]:
                raise ValueError("operator ambient space does not match N and d")
        KernelParams(self.N)                                   # validates N
        sep = self.separation if self.separation is not None else default_separation(self.N, T.shape[1])
        object.__setattr__(self, "support", T)
        object.__setattr__(self, "signs", u)
        object.__setattr__(self, "separation", float(sep))
        if self.enforce_separation:
            rep = check_separation(T, thresholds=sep, form="max")
            if not rep.satisfied:
                raise SeparationError(f"support separation {rep.min_pairwise:.4g} below {sep:.4g}")

    @property
    def d(self) -> int:
        return self.support.shape[1]

    @property
    def S(self) -> int:
        return self.support.shape[0]


@dataclass(frozen=True, eq=False)
class InterpolationSystem:
    """Scaled ``(d+1)S`` square system and its solution.

    ``solution`` is ``[a; kappa a_1; ...; kappa a_d]``; ``alpha`` and
    ``alpha_l`` are the unscaled coefficients.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    solution: np.ndarray
    alpha: np.ndarray
    alpha_l: np.ndarray
    condition: float


def _scale_blocks(raw: np.ndarray, S: int, d: int, kap: float) -> np.ndarray:
    # row block 0 keeps its sign, rows for e_l get -1/kappa; columns for e_l get 1/kappa
    r = np.concatenate([np.ones(S), np.full(d * S, -1.0 / kap)])
    c = np.concatenate([np.ones(S), np.full(d * S, 1.0 / kap)])
    return raw * r[:, None] * c[None, :]


def _dbar_raw(T: np.ndarray, params: KernelParams) -> np.ndarray:
    S, d = T.shape
    idx = _unit_indices(d)
    diff = T[:, None, :] - T[None, :, :]          # r_j - r_k
    flat = diff.reshape(-1, d)
    blocks = [[gbar_eval(flat, _add(n, m), params, d).reshape(S, S) for m in idx] for n in idx]
    return np.block(blocks)


def _solve_system(D: np.ndarray, u: np.ndarray, S: int, d: int, kap: float,
                  max_condition: float = 1e12) -> InterpolationSystem:
    rhs = np.concatenate([u, np.zeros(d * S, dtype=complex)])
    try:
        cond = float(np.linalg.cond(D))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularSystemError(f"interpolation system condition number {cond:.3g}")
    sol = np.linalg.solve(D, rhs)
    alpha = sol[:S]
    alpha_l = sol[S:].reshape(d, S) / kap
    return InterpolationSystem(D, rhs, sol, alpha, alpha_l, cond)


@dataclass(eq=False)
class CertificatePolynomial:
    """Certificate ``Q(r) = f(r)^H w`` together with its construction data.

    Attributes:
        problem: Support, signs and kernel size.
        kind: ``"deterministic"`` or ``"random"``.
        system: Solved interpolation system (``D`` or ``Dbar``).
        kappa: Kernel curvature scale.
        w: Coefficient vector of length ``L^d``.
        q: For the random kind, ``A h`` in measurement space (rescaled ``A``).
        dbar: Deterministic system for comparison (random kind only).
        scale: Isotropy rescaling applied to the operator.
    """

    problem: CertificateProblem
    kind: str
    system: InterpolationSystem
    kappa: float
    w: np.ndarray
    q: np.ndarray | None = None
    dbar: np.ndarray | None = None
    scale: float = 1.0
    _gm_cols: np.ndarray | None = field(default=None, repr=False)

    @property
    def params(self) -> KernelParams:
        return KernelParams(self.problem.N)

    @property
    def d(self) -> int:
        return self.problem.d

    @property
    def N(self) -> int:
        return self.problem.N

    @property
    def concentration(self) -> float | None:
        """``||D - Dbar||`` for the random kind."""
        if self.dbar is None:
            return None
        return float(np.linalg.norm(self.system.matrix - self.dbar, 2))

    def _multiplier(self, n) -> np.ndarray:
        # entrywise (-i 2 pi p)^n over the lexicographic index layout
        p = frequency_indices(self.N)
        out = np.ones(1, dtype=complex)
        for k in n:
            out = np.kron(out, (-1j * TWO_PI * p) ** k)
        return out

    def evaluate(self, points, n=None, chunk: int = 256) -> np.ndarray:
        """``d^n Q`` at the given points through the coefficient vector."""
        d = self.d
        n = (0,) * d if n is None else ((int(n),) if np.isscalar(n) else tuple(n))
        pts = as_points(points, d)
        coef = self.w * self._multiplier(n)
        out = np.empty(pts.shape[0], dtype=complex)
        for a in range(0, pts.shape[0], chunk):
            F = steering_matrix(pts[a:a + chunk], self.N)
            out[a:a + chunk] = F.conj().T @ coef
        return out

    def partials(self, points, orders, chunk: int = 128) -> dict:
        """Several partial derivatives at once, sharing the steering matrices."""
        d = self.d
        pts = as_points(points, d)
        mults = {tuple(n): self.w * self._multiplier(tuple(n)) for n in orders}
        out = {k: np.empty(pts.shape[0], dtype=complex) for k in mults}
        for a in range(0, pts.shape[0], chunk):
            FH = steering_matrix(pts[a:a + chunk], self.N).conj().T
            for k, coef in mults.items():
                out[k][a:a + chunk] = FH @ coef
        return out

    def evaluate_terms(self, points, n=None) -> np.ndarray:
        """``d^n Q`` summed term by term (independent of ``w``)."""
        d = self.d
        n = (0,) * d if n is None else ((int(n),) if np.isscalar(n) else tuple(n))
        pts = as_points(points, d)
        T = self.problem.support
        idx = _unit_indices(d)
        coeffs = [self.system.alpha] + [self.system.alpha_l[l] for l in range(d)]
        out = np.zeros(pts.shape[0], dtype=complex)
        if self.kind == "deterministic":
            for m, a in zip(idx, coeffs):
                for k in range(T.shape[0]):
                    out += a[k] * gbar_eval(pts - T[k], _add(n, m), self.params, d)
            return out
        # random: <A g_m(r_k), A f^{(n)}(r)>
        op = self.problem.operator
        Af = op.forward(_steering_derivative_matrix(pts, n, self.N)) * self.scale
        AG = self._gm_cols
        coef = np.concatenate(coeffs)
        return Af.conj().T @ (AG @ coef)

    def grid_values(self, K, n=None) -> np.ndarray:
        """``d^n Q`` on the uniform grid ``n / K`` (shape ``K``), by FFT."""
        d = self.d
        K = tuple(int(k) for k in np.broadcast_to(np.atleast_1d(K), (d,)))
        n = (0,) * d if n is None else tuple(n)
        spec = GridSpec(K)
        return fgrid_adjoint(self.w * self._multiplier(n), spec, self.N).reshape(K)

    def interpolation_residuals(self) -> tuple[float, float]:
        """``max_k |Q(r_k) - u_k|`` and ``max_k |grad Q(r_k)|``."""
        d = self.d
        T = self.problem.support
        val = self.evaluate(T)
        grads = [self.evaluate(T, e) for e in _unit_indices(d)[1:]]
        g = np.sqrt(sum(np.abs(x) ** 2 for x in grads))
        return float(np.abs(val - self.problem.signs).max()), float(g.max())

    def to_dict(self) -> dict:
        pr = self.problem
        cplx = lambda a: [[float(z.real), float(z.imag)] for z in np.ravel(a)]
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "N": pr.N,
            "d": pr.d,
            "kappa": self.kappa,
            "separation": pr.separation,
            "support": pr.support.tolist(),
            "signs": cplx(pr.signs),
            "alpha": cplx(self.system.alpha),
            "alpha_l": [cplx(a) for a in self.system.alpha_l],
            "condition": self.system.condition,
            "concentration": self.concentration,
            "operator_scale": self.scale,
        }


def _steering_derivative_matrix(pts: np.ndarray, n, N: int) -> np.ndarray:
    # columns d^n f(r) = (i 2 pi p)^n f(r)
    p = frequency_indices(N)
    mult = np.ones(1, dtype=complex)
    for k in n:
        mult = np.kron(mult, (1j * TWO_PI * p) ** k)
    return steering_matrix(pts, N) * mult[:, None]


def build_deterministic_certificate(problem: CertificateProblem) -> CertificatePolynomial:
    """Solve the ``Dbar`` system and assemble ``Qbar``."""
    T, u, d, S = problem.support, problem.signs, problem.d, problem.S
    params = KernelParams(problem.N)
    kap = kappa(params)
    D = _scale_blocks(_dbar_raw(T, params), S, d, kap)
    system = _solve_system(D, u, S, d, kap)
    G = np.hstack([gm_matrix(T, m, params, d) for m in _unit_indices(d)])
    coef = np.concatenate([system.alpha] + [system.alpha_l[l] for l in range(d)])
    w = G @ coef
    return CertificatePolynomial(problem, "deterministic", system, kap, w)


def build_random_certificate(problem: CertificateProblem, scale: float | None = None) -> CertificatePolynomial:
    """Solve the ``D`` system for ``A^H A`` and assemble ``Q``.

    Args:
        problem: Must carry an operator (``mode="random"``).
        scale: Isotropy rescaling of the operator; defaults to the
            operator's :attr:`~MeasurementOperator.isotropy_scale`.

    Raises:
        SingularSystemError: If ``D`` is numerically singular.
    """
    op = problem.operator
    if op is None:
        raise ValueError("random certificate needs problem.operator")
    c = op.isotropy_scale if scale is None else float(scale)
    T, u, d, S = problem.support, problem.signs, problem.d, problem.S
    params = KernelParams(problem.N)
    kap = kappa(params)
    idx = _unit_indices(d)
    G = np.hstack([gm_matrix(T, m, params, d) for m in idx])              # (n, (d+1)S)
    Fd = np.hstack([_steering_derivative_matrix(T, n, problem.N) for n in idx])
    AG = c * op.forward(G)
    AF = c * op.forward(Fd)
    D = _scale_blocks(AF.conj().T @ AG, S, d, kap)
    Dbar = _scale_blocks(_dbar_raw(T, params), S, d, kap)
    system = _solve_system(D, u, S, d, kap)
    coef = np.concatenate([system.alpha] + [system.alpha_l[l] for l in range(d)])
    q = AG @ coef                                   # A h, rescaled operator
    w = c * op.adjoint(q)                           # A^H A h
    return CertificatePolynomial(problem, "random", system, kap, np.asarray(w).ravel(), q, Dbar, c, AG)


def build_certificate(problem: CertificateProblem) -> CertificatePolynomial:
    if problem.mode == "random":
        return build_random_certificate(problem)
    return build_deterministic_certificate(problem)


# --- certification -----------------------------------------------------------

@dataclass(frozen=True)
class CertifiedBound:
    """Grid evaluation of ``|Q|`` lifted to a bound over the continuum.

    Attributes:
        grid_max: Max of ``|Q|`` over grid nodes at ``l_inf`` distance at
            least ``exclusion_radius - h/2`` from the support.
        spacing: Grid spacing ``h`` (per axis).
        K: Grid size per axis.
        sup_estimate: Bound on ``sup |Q|`` over the whole torus (pass 1).
        bound: Certified bound on ``sup |Q|`` outside the exclusion balls.
        exclusion_radius: Half-width of the excluded ``l_inf`` balls.
        far_radius: Radius defining the far region.
        far_grid_max: Grid max of ``|Q|`` in the far region.
        far_ok: ``far_grid_max <= 0.99 + far_slack``.
        interp_residual: ``max |Q(r_k) - u_k|``.
        grad_residual: ``max |grad Q(r_k)|``.
        residual_ok: Residuals within ``1e-8`` and ``1e-6 kappa``.
        passed: ``bound < 1`` and ``residual_ok``.
    """

    grid_max: float
    spacing: float
    K: tuple[int, ...]
    sup_estimate: float
    bound: float
    exclusion_radius: float
    far_radius: float
    far_grid_max: float
    far_ok: bool
    interp_residual: float
    grad_residual: float
    residual_ok: bool
    passed: bool
    rule: str = "two_pass"

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def fine_spacing_grid_size(N: int, eps: float = 0.0005, c_tilde: float = 1.0) -> int:
    """Points per axis for the spacing ``h = eps / (3 c L^4)``."""
    L = 2 * N + 1
    return int(np.ceil(3.0 * c_tilde * L ** 4 / eps))


def _min_linf_distance(cells_pts, T: np.ndarray) -> np.ndarray:
    dist = np.full(cells_pts[0].shape, np.inf)
    for t in T:
        dk = np.zeros(cells_pts[0].shape)
        for l, g in enumerate(cells_pts):
            dk = np.maximum(dk, wrap_distance(g, t[l]))
        dist = np.minimum(dist, dk)
    return dist


def certify_sup_bound(cert: CertificatePolynomial, exclusion_radius: float | None = None,
                      grid_density: int | None = None, rule: str = "two_pass",
                      far_radius: float | None = None, far_slack: float = 0.005,
                      max_points: int = 2 * 10 ** 8) -> CertifiedBound:
    """Certify ``|Q| < 1`` away from the support.

    Pass 1 bounds the global sup from the full grid, ``sup|Q| <= m / (1 - lam)``
    with ``lam = pi N d h``; pass 2 lifts the grid max over the non-excluded
    region, ``bound = m_g + lam * sup``, using Bernstein's inequality
    ``|d_l Q| <= 2 pi N sup|Q|`` per coordinate.

    Args:
        cert: Certificate.
        exclusion_radius: ``l_inf`` half-width of excluded balls; defaults to
            ``0.2447 / N``.
        grid_density: Points per axis. Defaults to ``64 L`` (d = 1),
            ``8 L`` (d = 2) or ``4 L`` (d = 3).
        rule: ``"two_pass"`` or ``"fine_spacing"`` (spacing ``eps/(3 L^4)``, d = 1
            and tiny N only).
        far_radius: Far region threshold; defaults to ``exclusion_radius``.
        far_slack: Slack on the far-region target ``0.99``.
        max_points: Refuse grids larger than this.

    Raises:
        GridTooCoarseError: If ``pi N d h >= 1``.
    """
    N, d = cert.N, cert.d
    L = 2 * N + 1
    rho = NEAR_RADIUS / N if exclusion_radius is None else float(exclusion_radius)
    far = rho if far_radius is None else float(far_radius)
    if rule == "fine_spacing":
        K = fine_spacing_grid_size(N)
    elif rule == "two_pass":
        K = grid_density or {1: 64 * L, 2: 8 * L, 3: 4 * L}[d]
    else:
        raise ValueError(f"unknown rule {rule!r}")
    K = int(K)
    if K ** d > max_points:
        raise ValueError(f"grid of {K}^{d} points exceeds max_points={max_points}")
    h = 1.0 / K
    lam = np.pi * N * d * h
    if lam >= 1.0:
        raise GridTooCoarseError(f"pi N d h = {lam:.3g} >= 1; use more grid points")
    absQ = np.abs(cert.grid_values((K,) * d))
    sup_est = float(absQ.max()) / (1.0 - lam)
    axes = np.meshgrid(*[np.arange(K) * h] * d, indexing="ij", sparse=True)
    dist = _min_linf_distance(axes, cert.problem.support)
    region = dist >= rho - 0.5 * h
    m_g = float(absQ[region].max()) if region.any() else 0.0
    far_region = dist >= far
    far_max = float(absQ[far_region].max()) if far_region.any() else 0.0
    bound = m_g + lam * sup_est
    ires, gres = cert.interpolation_residuals()
    res_ok = ires <= 1e-8 and gres <= 1e-6 * cert.kappa
    return CertifiedBound(m_g, h, (K,) * d, sup_est, bound, rho, far, far_max,
                          far_max <= FAR_BOUND + far_slack, ires, gres, res_ok,
                          bool(bound < 1.0 and res_ok), rule)


@dataclass(frozen=True)
class NearRegionReport:
    """Hessian diagnostics of ``|Q|`` near one support point.

    ``passed`` means the Hessian of ``|Q|`` is negative definite (leading
    principal minors alternate in sign) at every tested point. ``max_second``
    and ``max_mixed`` are the largest diagonal entry and largest off-diagonal
    magnitude of that Hessian over the tested points, in units of
    ``kappa^2``; the ``*_ok`` flags compare them with ``-0.842`` and
    ``0.2113``. ``at_center_*`` are the same quantities for the phase-aligned
    real part ``Re(conj(u_k) Q)`` at ``r_k`` itself.
    """

    passed: bool
    n_points: int
    radius: float
    max_leading_minor_ratio: float
    max_second: float
    max_mixed: float
    second_ok: bool
    mixed_ok: bool
    at_center_second: float
    at_center_mixed: float
    worst_point: list | None


def near_region_check(cert: CertificatePolynomial, k: int = 0, n_points: int = 200,
                      radius: float | None = None, seed: int = 0) -> NearRegionReport:
    """Check concavity of ``|Q|`` on the near region around ``r_k``.

    Points are the centre, the ``2^d`` corners and ``n_points`` uniform
    samples of the ``l_inf`` ball of the given radius (default ``0.2447/N``).
    Second-order values are reported normalized by ``kappa^2``.
    """
    N, d = cert.N, cert.d
    rad = NEAR_RADIUS / N if radius is None else float(radius)
    rk = cert.problem.support[k]
    uk = cert.problem.signs[k]
    rng = np.random.default_rng(seed)
    corners = np.array(list(itertools.product([-rad, rad], repeat=d)))
    offs = np.vstack([np.zeros((1, d)), corners, rng.uniform(-rad, rad, size=(n_points, d))])
    pts = np.mod(rk + offs, 1.0)
    orders = [(0,) * d] + _unit_indices(d)[1:]
    pairs = [(a, b) for a in range(d) for b in range(a, d)]
    for a, b in pairs:
        e = [0] * d
        e[a] += 1
        e[b] += 1
        orders.append(tuple(e))
    P = cert.partials(pts, orders)
    Q = P[(0,) * d] * np.conj(uk)                    # phase-aligned: Q(r_k) ~ 1
    first = [P[o] * np.conj(uk) for o in _unit_indices(d)[1:]]
    second = {}
    for a, b in pairs:
        e = [0] * d
        e[a] += 1
        e[b] += 1
        second[(a, b)] = second[(b, a)] = P[tuple(e)] * np.conj(uk)
    QR, QI = Q.real, Q.imag
    mag = np.abs(Q)
    H = np.empty((pts.shape[0], d, d))
    for a in range(d):
        ga = QR * first[a].real + QI * first[a].imag
        for b in range(d):
            gb = QR * first[b].real + QI * first[b].imag
            hab = (first[a].real * first[b].real + QR * second[(a, b)].real
                   + first[a].imag * first[b].imag + QI * second[(a, b)].imag)
            H[:, a, b] = hab / mag - ga * gb / mag ** 3
    kap2 = cert.kappa ** 2
    Hn = H / kap2
    ok = np.ones(pts.shape[0], dtype=bool)
    worst_ratio = -np.inf
    for m in range(1, d + 1):
        signed = np.linalg.det(Hn[:, :m, :m]) * (-1) ** m      # must be > 0
        ok &= signed > 0
        worst_ratio = max(worst_ratio, float((-signed).max()))
    diag_h = np.einsum("pii->pi", Hn)
    off = np.abs(Hn[:, ~np.eye(d, dtype=bool)]) if d > 1 else np.zeros((pts.shape[0], 1))
    sec_r = np.array([second[(a, a)].real[0] for a in range(d)]) / kap2
    mixed_r = np.array([abs(second[(a, b)].real[0]) for a, b in pairs if a != b] or [0.0]) / kap2
    bad = np.flatnonzero(~ok)
    return NearRegionReport(bool(ok.all()), int(pts.shape[0]), rad, worst_ratio,
                            float(diag_h.max()), float(off.max()),
                            bool(diag_h.max() <= -0.842), bool(off.max() <= 0.2113),
                            float(sec_r.max()), float(mixed_r.max()),
                            pts[bad[0]].tolist() if bad.size else None)


@dataclass(frozen=True)
class DiscreteCertificate:
    """Certificate sampled on a grid, ``v_n = Q(n / K)``."""

    v: np.ndarray
    spec: GridSpec
    support_index: np.ndarray
    sign_error: float
    max_off_support: float
    offending_node: int | None
    passed: bool


def discrete_certificate(cert: CertificatePolynomial, spec: GridSpec, sign_tol: float = 1e-6,
                         on_grid_tol: float = 1e-9) -> DiscreteCertificate:
    """Sample ``Q`` on the grid and check the discrete dual conditions.

    ``v_S`` must match the signs within ``sign_tol`` and ``|v|`` must stay
    below 1 off the support; ``offending_node`` is the flat index of the
    largest off-support value when that fails.
    """
    T = cert.problem.support
    K = np.asarray(spec.K, dtype=float)
    if np.abs(T * K - np.rint(T * K)).max() > on_grid_tol:
        raise ValueError("support is not on the grid")
    idx = spec.nearest_index(T)
    v = cert.grid_values(spec.K).ravel()
    err = float(np.abs(v[idx] - cert.problem.signs).max())
    mag = np.abs(v)
    mag[idx] = -np.inf
    off = float(mag.max()) if mag.size > idx.size else 0.0
    worst = int(np.argmax(mag)) if mag.size > idx.size else None
    ok = err <= sign_tol and off < 1.0
    return DiscreteCertificate(v, spec, idx, err, off, None if ok else worst, bool(ok))
