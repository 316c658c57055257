"""Fine-grid dictionary ``B = A F_grid`` and the l1 recovery programs.

Two programs are solved by ADMM with complex soft-thresholding, or by an
interior-point conic solver on working sets when clarabel is installed:

* ``L1(y)``:     minimize ||s||_1 subject to B s = y
* ``L1-ERR``:   minimize ||s||_1 subject to ||y - B s||_2^2 <= eta

``F_grid`` has columns ``f(n_1/K_1, ..., n_d/K_d)`` and is applied with one
FFT per axis. Because ``F_grid F_grid^H = K I`` whenever every ``K_l >= L_l``,
the Gram matrix is ``B B^H = K A A^H`` and is cheap to factor.

For large grids the programs are solved on a working set of columns. After
each restricted solve the dual vector ``nu`` is checked on the full grid,
``|B^H nu| <= 1``, and violating columns are added; at termination the KKT
conditions hold on the whole grid.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import scipy.fft
import scipy.ndimage
import scipy.optimize

from .sensing import MeasurementOperator
from .spectral import frequency_indices

__all__ = [
    "GridSpec",
    "GridDictionary",
    "SolverConfig",
    "SparseSolution",
    "Peak",
    "RefitResult",
    "IllConditionedError",
    "RankDeficientError",
    "fgrid_apply",
    "fgrid_adjoint",
    "solve_l1_equality",
    "solve_l1_err",
    "extract_support",
    "refit_amplitudes",
    "default_eta",
    "soft_threshold",
]

SCHEMA_VERSION = 1


class IllConditionedError(np.linalg.LinAlgError):
    """Least-squares system too ill-conditioned to trust."""


class RankDeficientError(np.linalg.LinAlgError):
    """The rows of ``B`` are linearly dependent."""


@dataclass(frozen=True)
class GridSpec:
    """Recovery grid of ``K_1 x ... x K_d`` points on the torus.

    ``base`` is the natural grid the super-resolution factor refers to,
    e.g. ``(L,)`` in one dimension or ``(N_T N_R, L, L)`` for MIMO.
    """

    K: tuple[int, ...]
    base: tuple[int, ...] | None = None

    def __post_init__(self):
        K = tuple(int(k) for k in np.atleast_1d(self.K))
        if any(k < 1 for k in K):
            raise ValueError("grid sizes must be positive")
        object.__setattr__(self, "K", K)
        if self.base is not None:
            base = tuple(int(b) for b in np.atleast_1d(self.base))
            if len(base) != len(K):
                raise ValueError("base and K must have the same length")
            object.__setattr__(self, "base", base)

    @classmethod
    def from_srf(cls, srf, base) -> "GridSpec":
        base = tuple(int(b) for b in np.atleast_1d(base))
        srf_t = np.broadcast_to(np.asarray(srf, dtype=float), (len(base),))
        K = tuple(int(round(s * b)) for s, b in zip(srf_t, base))
        return cls(K, base)

    @property
    def d(self) -> int:
        return len(self.K)

    @property
    def size(self) -> int:
        return int(np.prod(self.K))

    @property
    def srf(self) -> tuple[float, ...] | None:
        if self.base is None:
            return None
        return tuple(k / b for k, b in zip(self.K, self.base))

    def cells(self, idx) -> np.ndarray:
        """Integer cell coordinates ``(P, d)`` of flat indices."""
        return np.stack(np.unravel_index(np.asarray(idx, dtype=np.int64), self.K), axis=-1)

    def points(self, idx) -> np.ndarray:
        """Grid points ``n / K`` of flat indices, shape ``(P, d)``."""
        return self.cells(idx) / np.asarray(self.K, dtype=float)

    def nearest_index(self, points) -> np.ndarray:
        """Flat index of the grid node nearest each point (wrap-aware)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells = np.mod(np.rint(pts * np.asarray(self.K)), np.asarray(self.K)).astype(np.int64)
        return np.ravel_multi_index(tuple(cells.T), self.K)


def _check_grid(spec: GridSpec, N: tuple[int, ...]):
    if len(N) != spec.d:
        raise ValueError(f"grid has dimension {spec.d}, ambient space {len(N)}")
    for k, n in zip(spec.K, N):
        if k < 2 * n + 1:
            raise ValueError(f"grid size {k} is below L = {2 * n + 1}")


def fgrid_apply(s: np.ndarray, spec: GridSpec, N) -> np.ndarray:
    """``(F_grid s)_p = sum_n s_n e^{i 2 pi <p, n/K>}`` for ``p`` in ``-N..N``.

    Args:
        s: Grid coefficients, flat (C order) or shaped ``K``.
        spec: Grid.
        N: Half-widths (tuple, or int for all axes).

    Returns:
        Flat complex vector of length ``prod(2N_l+1)``.
    """
    Ns = (int(N),) * spec.d if np.isscalar(N) else tuple(N)
    _check_grid(spec, Ns)
    X = np.asarray(s, dtype=complex).reshape(spec.K)
    for ax, (k, n) in enumerate(zip(spec.K, Ns)):
        X = scipy.fft.ifft(X, axis=ax, norm="forward")
        X = np.take(X, np.arange(-n, n + 1) % k, axis=ax)
    return X.ravel()


def fgrid_adjoint(z: np.ndarray, spec: GridSpec, N) -> np.ndarray:
    """``(F_grid^H z)_n = sum_p z_p e^{-i 2 pi <p, n/K>}``, flat over the grid."""
    Ns = (int(N),) * spec.d if np.isscalar(N) else tuple(N)
    _check_grid(spec, Ns)
    Z = np.asarray(z, dtype=complex).reshape(tuple(2 * n + 1 for n in Ns))
    for ax, (k, n) in enumerate(zip(spec.K, Ns)):
        shape = list(Z.shape)
        shape[ax] = k
        full = np.zeros(shape, dtype=complex)
        index = [slice(None)] * Z.ndim
        index[ax] = np.arange(-n, n + 1) % k
        full[tuple(index)] = Z
        Z = scipy.fft.fft(full, axis=ax)
    return Z.ravel()


class GridDictionary:
    """``B = A F_grid`` with fast application and a cached Gram factorization."""

    def __init__(self, operator: MeasurementOperator, spec: GridSpec):
        _check_grid(spec, operator.N)
        self.operator = operator
        self.spec = spec
        self._eig = None

    @property
    def M(self) -> int:
        return self.operator.M

    @property
    def size(self) -> int:
        return self.spec.size

    @property
    def N(self) -> tuple[int, ...]:
        return self.operator.N

    def forward(self, s: np.ndarray) -> np.ndarray:
        return self.operator.forward(fgrid_apply(s, self.spec, self.N))

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return fgrid_adjoint(self.operator.adjoint(y), self.spec, self.N)

    def columns(self, idx) -> np.ndarray:
        """Dense columns ``A f(n/K)`` for flat grid indices, shape ``(M, P)``."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if idx.size == 0:
            return np.zeros((self.M, 0), dtype=complex)
        out = []
        for chunk in np.array_split(idx, max(1, idx.size // 4096)):
            out.append(self.operator.atoms(self.spec.points(chunk)))
        return np.hstack(out)

    def dense(self) -> np.ndarray:
        return self.columns(np.arange(self.size))

    def gram(self) -> np.ndarray:
        """``B B^H = K A A^H``."""
        return self.size * self.operator.gram()

    def gram_eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached eigendecomposition ``(w, V)`` of ``B B^H``."""
        if self._eig is None:
            G = self.gram()
            w, V = np.linalg.eigh(0.5 * (G + G.conj().T))
            self._eig = (w, V)
        return self._eig


@dataclass
class SolverConfig:
    """ADMM and support-extraction settings.

    Attributes:
        tol_rel, tol_abs: Stopping tolerances.
        max_iter: ADMM iteration cap per (restricted) solve.
        rho: Initial penalty; chosen from the data when None.
        balance: Residual balancing of the penalty.
        relax: Over-relaxation factor of the ADMM splitting.
        backend: Solver for working-set subproblems: ``"admm"``, ``"conic"``
            (interior point via clarabel) or ``"auto"`` (conic when clarabel
            is importable). Full-grid solves always use ADMM.
        strategy: ``"full"``, ``"working_set"`` or ``"auto"`` (working set
            when a conic backend is available or the grid has more than
            ``working_set_threshold`` nodes).
        rank_policy: ``"reduce"`` solves on the range of ``B`` when the Gram
            is singular; ``"raise"`` raises :class:`RankDeficientError`.
        working_set_*: Column generation for large grids. Each round solves
            on the working set, then adds up to ``working_set_add`` columns
            where ``|B^H nu| > 1 + working_set_tol`` (local peaks of the
            violation first when ``working_set_peaks``). With the conic
            backend, columns with zero weight and ``|B^H nu|`` below
            ``working_set_prune`` are dropped between rounds, until the
            largest violation stops decreasing.
        min_fraction, merge_radius, max_peaks: Support extraction.
        refit: Least-squares amplitude refit on the extracted support.
        debug: Fix the penalty and assert the monotone ADMM surrogate.
    """

    tol_rel: float = 1e-7
    tol_abs: float = 1e-9
    max_iter: int = 20000
    rho: float | None = None
    balance: bool = True
    relax: float = 1.0
    backend: str = "auto"
    strategy: str = "auto"
    working_set_threshold: int = 50_000
    working_set_init: int | None = None
    working_set_add: int | None = None
    working_set_tol: float = 1e-4
    working_set_max_outer: int = 40
    working_set_peaks: bool = True
    working_set_prune: float | None = 0.8
    rank_tol: float = 1e-10
    rank_policy: str = "reduce"
    min_fraction: float = 0.05
    merge_radius: int = 1
    max_peaks: int | None = None
    refit: bool = True
    debug: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown solver settings: {sorted(bad)}")
        return cls(**d)


@dataclass(frozen=True)
class Peak:
    index: int
    cell: tuple[int, ...]
    amplitude: complex
    magnitude: float


@dataclass(frozen=True)
class RefitResult:
    amplitudes: np.ndarray
    residual_norm: float
    condition: float


@dataclass
class SparseSolution:
    """Grid solution with extracted support and refit amplitudes.

    ``s`` is the flat grid vector (C order over ``spec.K``). ``nu`` is the
    dual vector in measurement space, with ``B^H nu`` the discrete dual
    certificate.
    """

    s: np.ndarray
    spec: GridSpec
    mode: str
    converged: bool
    iterations: int
    residual_norm: float
    objective: float
    eta: float = 0.0
    nu: np.ndarray | None = None
    support: list[int] = field(default_factory=list)
    locations: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        nz = np.flatnonzero(self.s)
        out = {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "grid": {"K": list(self.spec.K), "base": None if self.spec.base is None else list(self.spec.base)},
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "objective": self.objective,
            "eta": self.eta,
            "support": [int(i) for i in self.support],
            "locations": np.asarray(self.locations).tolist(),
            "amplitudes": [[float(a.real), float(a.imag)] for a in self.amplitudes],
            "nonzeros": {"index": nz.tolist(),
                         "value": [[float(v.real), float(v.imag)] for v in self.s[nz]]},
            "diagnostics": _jsonable(self.diagnostics),
        }
        return json.dumps(out, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    """Complex soft-thresholding: shrink the magnitude by ``t``, keep the phase."""
    mag = np.abs(x)
    scale = np.maximum(1.0 - t / np.maximum(mag, np.finfo(float).tiny), 0.0)
    return x * scale


def default_eta(M: int, sigma2: float) -> float:
    """``eta = M sigma^2 (1 + 2/sqrt(M))`` for per-entry noise variance ``sigma2``."""
    return float(M * sigma2 * (1.0 + 2.0 / np.sqrt(M)))


# --- ADMM kernels ------------------------------------------------------------

class _System:
    """Normalized linear system ``Bt = B / c`` with its Gram eigenbasis."""

    def __init__(self, fwd: Callable, adj: Callable, w: np.ndarray, V: np.ndarray,
                 size: int, rank_tol: float, c: float | None = None):
        lam_max = float(w.max()) if w.size else 0.0
        if lam_max <= 0:
            raise RankDeficientError("B is identically zero")
        self.c = np.sqrt(lam_max) if c is None else float(c)
        keep = w > rank_tol * lam_max
        self.rank = int(keep.sum())
        self.V = V[:, keep]
        self.lam = w[keep] / self.c ** 2
        self._fwd, self._adj = fwd, adj
        self.size = size
        self.M = V.shape[0]

    def fwd(self, s):
        return self._fwd(s) / self.c

    def adj(self, y):
        return self._adj(y) / self.c

    def gram_pinv(self, v):
        return self.V @ ((self.V.conj().T @ v) / self.lam)

    def inv_i_plus_gram(self, v):
        # (I + G)^{-1} v, with the null space of G mapping to itself
        coef = self.V.conj().T @ v
        return v - self.V @ coef + self.V @ (coef / (1.0 + self.lam))


def _initial_rho(sys: _System, y_t: np.ndarray) -> float:
    s0 = sys.adj(sys.gram_pinv(y_t))
    peak = float(np.abs(s0).max()) if s0.size else 0.0
    return 1.0 / (0.1 * peak) if peak > 0 else 1.0


class _Projector:
    """Euclidean projection onto ``{s : ||Bt s - yt|| <= r}``.

    For ``r = 0`` this is the affine projection ``v - Bt^H G^+ (Bt v - yt)``.
    Otherwise ``s = v - lam Bt^H (I + lam G)^{-1} (Bt v - yt)`` where the
    scalar ``lam >= 0`` makes the constraint active; it is found by bracketing
    in the Gram eigenbasis. ``feasible`` turns False when the residual outside
    the range of ``Bt`` already exceeds ``r``.
    """

    def __init__(self, sys: _System, y_t: np.ndarray, radius: float):
        self.sys, self.y_t, self.r = sys, y_t, float(radius)
        self.feasible = True

    def __call__(self, v: np.ndarray) -> np.ndarray:
        sys = self.sys
        resid = sys.fwd(v) - self.y_t
        if self.r == 0.0:
            return v - sys.adj(sys.gram_pinv(resid))
        e = sys.V.conj().T @ resid
        if sys.rank == sys.M:
            null2 = 0.0
        else:
            null2 = float(np.linalg.norm(resid - sys.V @ e) ** 2)
        e2 = np.abs(e) ** 2
        lam_i = sys.lam
        r2 = self.r ** 2

        def phi(t):
            return float((e2 / (1.0 + t * lam_i) ** 2).sum()) + null2 - r2

        if phi(0.0) <= 0.0:
            return v
        if null2 >= r2:
            self.feasible = False
            return v - sys.adj(sys.gram_pinv(resid))
        hi = 1.0
        while phi(hi) > 0.0:
            hi *= 4.0
            if hi > 1e300:
                break
        t = scipy.optimize.brentq(phi, 0.0, hi, xtol=1e-14 * hi, rtol=1e-13, maxiter=200)
        coef = e * (t / (1.0 + t * lam_i))
        return v - sys.adj(sys.V @ coef)


def _admm(sys: _System, project: _Projector, y_t: np.ndarray, cfg: SolverConfig,
          x0=None, u0=None, rho=None):
    """Two-block ADMM for ``min ||x||_1 + indicator_C(s)`` subject to ``s = x``.

    Returns ``(x, u, rho, iterations, converged, nu_t)`` where ``rho u`` is the
    dual certificate on the active columns and ``nu_t`` its measurement-space
    representative, ``Bt^H nu_t ~ rho u``.
    """
    size = sys.size
    x = np.zeros(size, dtype=complex) if x0 is None else x0.copy()
    u = np.zeros(size, dtype=complex) if u0 is None else u0.copy()
    rho = rho or cfg.rho or _initial_rho(sys, y_t)
    rho_lo, rho_hi = rho * 1e-6, rho * 1e6
    ynorm = np.linalg.norm(y_t)
    balance = cfg.balance and not cfg.debug
    tol_feas = project.r * (1.0 + cfg.tol_rel) + cfg.tol_abs + cfg.tol_rel * ynorm
    surrogate_prev = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        s = project(x - u)
        s_hat = cfg.relax * s + (1.0 - cfg.relax) * x
        x_new = soft_threshold(s_hat + u, 1.0 / rho)
        u_new = u + s_hat - x_new
        dx = np.linalg.norm(x_new - x)
        r_p = np.linalg.norm(s - x_new)
        r_d = rho * dx
        if cfg.debug:
            surrogate = dx ** 2 + np.linalg.norm(u_new - u) ** 2
            if it > 10 and surrogate_prev is not None:
                assert surrogate <= surrogate_prev * (1 + 1e-9) + 1e-30, \
                    f"ADMM surrogate increased at iteration {it}"
            surrogate_prev = surrogate
        x, u = x_new, u_new
        if dx <= cfg.tol_rel * np.linalg.norm(x) + cfg.tol_abs:
            if np.linalg.norm(sys.fwd(x) - y_t) <= tol_feas:
                converged = True
                break
        if balance:
            if r_p > 10 * r_d and rho < rho_hi:
                rho *= 2.0
                u /= 2.0
            elif r_d > 10 * r_p and rho > rho_lo:
                rho /= 2.0
                u *= 2.0
    nu_t = sys.gram_pinv(sys.fwd(rho * u))
    return x, u, rho, it, converged and project.feasible, nu_t


def _conic_restricted(Bw: np.ndarray, y_t: np.ndarray, radius: float):
    """Interior-point solve of the restricted program through its dual.

    ``max Re<nu, y> - r ||nu||  s.t.  |(Bw^H nu)_i| <= 1`` as a second-order
    cone program; the primal ``x`` is read off the cone multipliers.
    Returns ``(x, nu, iterations, solved)``.
    """
    import clarabel
    import scipy.sparse as sps

    M, n = Bw.shape
    Br, Bi = Bw.real, Bw.imag
    nv = 2 * M + (1 if radius > 0 else 0)
    q = np.concatenate([-y_t.real, -y_t.imag] + ([[radius]] if radius > 0 else []))
    Ac = np.zeros((3 * n, nv))
    Ac[1::3, :2 * M] = -np.hstack([Br.T, Bi.T])      # Re(Bw^H nu)
    Ac[2::3, :2 * M] = -np.hstack([-Bi.T, Br.T])     # Im(Bw^H nu)
    bc = np.zeros(3 * n)
    bc[0::3] = 1.0
    cones = [clarabel.SecondOrderConeT(3)] * n
    if radius > 0:
        A0 = np.zeros((2 * M + 1, nv))
        A0[0, -1] = -1.0
        A0[1:, :2 * M] = -np.eye(2 * M)
        A = sps.csc_matrix(np.vstack([A0, Ac]))
        b = np.concatenate([np.zeros(2 * M + 1), bc])
        cones = [clarabel.SecondOrderConeT(2 * M + 1)] + cones
        off = 2 * M + 1
    else:
        A, b, off = sps.csc_matrix(Ac), bc, 0
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    sol = clarabel.DefaultSolver(sps.csc_matrix((nv, nv)), q, A, b, cones, settings).solve()
    v = np.asarray(sol.x)
    zc = np.asarray(sol.z)[off:].reshape(n, 3)
    x = -(zc[:, 1] + 1j * zc[:, 2])
    solved = str(sol.status) in ("Solved", "SolverStatus.Solved")
    return x, v[:M] + 1j * v[M:2 * M], int(sol.iterations), solved


def _use_conic(cfg: SolverConfig) -> bool:
    if cfg.backend == "admm":
        return False
    if cfg.backend not in ("conic", "auto"):
        raise ValueError(f"unknown backend {cfg.backend!r}")
    try:
        import clarabel  # noqa: F401
    except ImportError:
        if cfg.backend == "conic":
            raise
        return False
    return True


# --- drivers -----------------------------------------------------------------

def _use_working_set(dic: GridDictionary, cfg: SolverConfig) -> bool:
    if cfg.strategy == "full":
        return False
    if cfg.strategy == "working_set":
        return True
    if cfg.strategy != "auto":
        raise ValueError(f"unknown strategy {cfg.strategy!r}")
    # interior-point subproblems beat full-grid ADMM at every size; a small
    # grid is then a single working set
    return dic.size > cfg.working_set_threshold or _use_conic(cfg)


def _rank_check(sys: _System, cfg: SolverConfig):
    if sys.rank < sys.M and cfg.rank_policy == "raise":
        raise RankDeficientError(f"Gram of B has rank {sys.rank} < M = {sys.M}")


def _dense_system(Bw: np.ndarray, cfg: SolverConfig) -> _System:
    G = Bw @ Bw.conj().T
    w, V = np.linalg.eigh(0.5 * (G + G.conj().T))
    # Bw is already normalized by the full-grid scale
    return _System(lambda s: Bw @ s, lambda y: Bw.conj().T @ y, w, V, Bw.shape[1], cfg.rank_tol, c=1.0)


def _initial_working_set(full_sys: _System, y_t: np.ndarray, size: int, n_init: int) -> np.ndarray:
    # strongest entries of the least-norm solution plus a fixed spread of
    # columns so the restricted Gram starts with full rank
    if n_init >= size:
        return np.arange(size)
    s_ln = full_sys.adj(full_sys.gram_pinv(y_t))
    n_top = min(size, n_init // 2)
    top = np.argpartition(-np.abs(s_ln), n_top - 1)[:n_top]
    spread = np.random.default_rng(0).choice(size, size=min(size, n_init - n_top), replace=False)
    return np.union1d(top, spread)


def _solve(dic: GridDictionary, y: np.ndarray, eta: float | None, cfg: SolverConfig) -> SparseSolution:
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=complex).ravel()
    if y.size != dic.M:
        raise ValueError(f"y has length {y.size}, expected M = {dic.M}")
    mode = "l1" if eta is None else "l1_err"
    if eta is not None and eta < 0:
        raise ValueError("eta must be non-negative")
    size = dic.size
    diag: dict = {}
    ynorm2 = float(np.vdot(y, y).real)
    if ynorm2 == 0 or (eta is not None and eta >= ynorm2):
        s = np.zeros(size, dtype=complex)
        return _finish(dic, y, s, mode, True, 0, eta or 0.0, np.zeros(dic.M, dtype=complex), cfg,
                       {"trivial": True}, t0)

    w_full, V_full = dic.gram_eig()
    full_sys = _System(dic.forward, dic.adjoint, w_full, V_full, size, cfg.rank_tol)
    _rank_check(full_sys, cfg)
    c = full_sys.c
    y_t = y / c
    radius = 0.0 if eta is None else np.sqrt(eta) / c
    diag["gram_rank"] = full_sys.rank

    if not _use_working_set(dic, cfg):
        proj = _Projector(full_sys, y_t, radius)
        x, _, rho, it, conv, nu_t = _admm(full_sys, proj, y_t, cfg)
        diag["strategy"] = "full"
        return _finish(dic, y, x, mode, conv, it, eta or 0.0, nu_t / c, cfg, diag, t0)

    M = dic.M
    n_init = cfg.working_set_init or min(size, max(4 * M, 200))
    n_add = cfg.working_set_add or max(4 * M, 200)
    W = _initial_working_set(full_sys, y_t, size, n_init)
    conic = _use_conic(cfg)
    x_w = u_w = None
    rho = None
    total_it = 0
    conv = False
    outer = 0
    history = []
    prune = cfg.working_set_prune is not None and conic
    for outer in range(1, cfg.working_set_max_outer + 1):
        Bw = dic.columns(W) / c
        if conic:
            x_w, nu_t, it, conv_w = _conic_restricted(Bw, y_t, radius)
            rank_w = full_sys.rank
        else:
            sys_w = _dense_system(Bw, cfg)
            proj = _Projector(sys_w, y_t, radius)
            x_w, u_w, rho, it, conv_w, nu_t = _admm(sys_w, proj, y_t, cfg, x_w, u_w, rho)
            rank_w = sys_w.rank
        total_it += it
        cert = np.abs(full_sys.adj(nu_t))
        cert[W] = 0.0
        viol = np.flatnonzero(cert > 1.0 + cfg.working_set_tol)
        history.append({"working_set": int(W.size), "iterations": int(it), "rank": rank_w,
                        "max_outside": float(cert.max()), "violations": int(viol.size)})
        if viol.size == 0 and rank_w == full_sys.rank:
            conv = conv_w
            break
        if cfg.working_set_peaks:
            loc = scipy.ndimage.maximum_filter(cert.reshape(dic.spec.K), size=3, mode="wrap").ravel()
            peaks = viol[cert[viol] >= loc[viol]]
            rest = np.setdiff1d(viol, peaks)
            order = np.concatenate([peaks[np.argsort(-cert[peaks], kind="stable")],
                                    rest[np.argsort(-cert[rest], kind="stable")]])
            add = order[:n_add]
        else:
            add = viol[np.argsort(-cert[viol], kind="stable")[:n_add]]
        if prune and len(history) > 1 and history[-1]["max_outside"] >= history[-2]["max_outside"]:
            prune = False                        # pruned columns keep coming back
        if prune:
            cw = np.abs(full_sys.adj(nu_t))[W]
            keep = (np.abs(x_w) > 1e-9 * np.abs(x_w).max()) | (cw >= cfg.working_set_prune)
            W, x_w = W[keep], x_w[keep]
        if rank_w < full_sys.rank:
            extra = np.random.default_rng(outer).choice(size, size=M, replace=False)
            add = np.union1d(add, extra)
        W_new = np.union1d(W, add)
        pos = np.searchsorted(W_new, W)          # carry the ADMM state over
        xs = np.zeros(W_new.size, dtype=complex)
        us = np.zeros(W_new.size, dtype=complex)
        xs[pos] = x_w
        if not conic:
            us[pos] = u_w
        x_w, u_w, W = xs, us, W_new
    s = np.zeros(size, dtype=complex)
    s[W] = x_w
    diag.update(strategy="working_set", backend="conic" if conic else "admm", outer_iterations=outer, history=history,
                working_set_size=int(W.size))
    return _finish(dic, y, s, mode, conv, total_it, eta or 0.0, nu_t / c, cfg, diag, t0)


def _finish(dic, y, s, mode, converged, iterations, eta, nu, cfg: SolverConfig, diag, t0) -> SparseSolution:
    res = float(np.linalg.norm(dic.forward(s) - y))
    sol = SparseSolution(s=s, spec=dic.spec, mode=mode, converged=bool(converged),
                         iterations=int(iterations), residual_norm=res,
                         objective=float(np.abs(s).sum()), eta=float(eta), nu=nu,
                         diagnostics=diag)
    peaks = extract_support(s, dic.spec.K, cfg.min_fraction, cfg.merge_radius, cfg.max_peaks)
    sol.support = [p.index for p in peaks]
    sol.locations = dic.spec.points(sol.support) if peaks else np.zeros((0, dic.spec.d))
    sol.amplitudes = np.array([p.amplitude for p in peaks], dtype=complex)
    if cfg.refit and peaks:
        try:
            fit = refit_amplitudes(dic.operator, sol.locations, y)
            sol.amplitudes = fit.amplitudes
            diag["refit_residual"] = fit.residual_norm
        except IllConditionedError as exc:
            diag["refit_error"] = str(exc)
    diag["seconds"] = time.perf_counter() - t0
    return sol


def solve_l1_equality(dictionary: GridDictionary, y: np.ndarray,
                      config: SolverConfig | None = None) -> SparseSolution:
    """Solve ``min ||s||_1`` subject to ``B s = y``.

    Returns a :class:`SparseSolution`; ``converged`` is False when the
    iteration cap was hit, in which case the last iterate is returned.
    """
    return _solve(dictionary, y, None, config or SolverConfig())


def solve_l1_err(dictionary: GridDictionary, y: np.ndarray, eta: float,
                 config: SolverConfig | None = None) -> SparseSolution:
    """Solve ``min ||s||_1`` subject to ``||y - B s||_2^2 <= eta``."""
    return _solve(dictionary, y, float(eta), config or SolverConfig())


# --- support extraction and refit -------------------------------------------

def _wrap_cheb(cells: np.ndarray, head: np.ndarray, K: np.ndarray) -> np.ndarray:
    diff = np.abs(cells - head) % K
    return np.minimum(diff, K - diff).max(axis=1)


def extract_support(s: np.ndarray, shape, min_fraction: float = 0.05, merge_radius: int = 1,
                    max_peaks: int | None = None) -> list[Peak]:
    """Peaks of ``|s|`` on a periodic grid.

    Local maxima above ``min_fraction * max|s|`` become cluster heads in order
    of decreasing magnitude (ties: lowest flat index first). Every
    above-threshold cell within ``merge_radius`` cells (Chebyshev, wrap-aware)
    of a head joins that head's cluster, as does any later head. A cluster is
    reported at its magnitude-weighted centroid cell with the summed complex
    amplitude of its members.

    Args:
        s: Grid vector, flat or shaped.
        shape: Grid shape ``K``.
        min_fraction: Relative magnitude threshold.
        merge_radius: Merge radius in cells.
        max_peaks: Keep only the strongest clusters.

    Returns:
        Peaks sorted by decreasing cluster magnitude.
    """
    K = tuple(int(k) for k in np.atleast_1d(shape))
    vals = np.asarray(s).reshape(K)
    mag = np.abs(vals)
    top = float(mag.max()) if mag.size else 0.0
    if top <= 0.0:
        return []
    thr = min_fraction * top
    size = 2 * merge_radius + 1
    local = scipy.ndimage.maximum_filter(mag, size=size, mode="wrap") if merge_radius > 0 else mag
    cand = np.flatnonzero((mag >= thr).ravel())
    heads = np.flatnonzero(((mag >= local) & (mag >= thr)).ravel())
    flat_mag = mag.ravel()
    flat_val = vals.ravel()
    heads = heads[np.lexsort((heads, -flat_mag[heads]))]
    Karr = np.asarray(K)
    cand_cells = np.stack(np.unravel_index(cand, K), axis=1)
    free = np.ones(cand.size, dtype=bool)
    pos_of = {int(c): i for i, c in enumerate(cand)}
    clusters = []
    for h in heads:
        i = pos_of[int(h)]
        if not free[i]:
            continue                    # already absorbed by a stronger head
        hc = cand_cells[i]
        dist = _wrap_cheb(cand_cells, hc, Karr)
        members = np.flatnonzero(free & (dist <= merge_radius))
        free[members] = False
        # centroid in wrapped offsets relative to the head
        off = (cand_cells[members] - hc + Karr // 2) % Karr - Karr // 2
        w = flat_mag[cand[members]]
        centre = np.mod(np.rint(hc + (w[:, None] * off).sum(axis=0) / w.sum()), Karr).astype(np.int64)
        idx = int(np.ravel_multi_index(tuple(centre), K))
        amp = complex(flat_val[cand[members]].sum())
        clusters.append(Peak(idx, tuple(int(c) for c in centre), amp, float(w.sum())))
    clusters.sort(key=lambda p: (-p.magnitude, p.index))
    if max_peaks is not None:
        clusters = clusters[:max_peaks]
    return clusters


def refit_amplitudes(operator: MeasurementOperator, locations, y: np.ndarray,
                     max_condition: float = 1e10) -> RefitResult:
    """Least-squares amplitudes for ``y ~ sum_k b_k A f(r_k)``.

    Raises:
        IllConditionedError: If the atom matrix has condition number above
            ``max_condition`` (e.g. a repeated location).
    """
    C = operator.atoms(locations)
    if C.shape[1] == 0:
        raise ValueError("need at least one location")
    sv = np.linalg.svd(C, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if C.shape[1] > C.shape[0] or cond > max_condition:
        raise IllConditionedError(f"atom matrix condition number {cond:.3g} exceeds {max_condition:.1g}")
    b, *_ = np.linalg.lstsq(C, y, rcond=None)
    return RefitResult(b, float(np.linalg.norm(y - C @ b)), cond)
