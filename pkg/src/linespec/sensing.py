"""Measurement operators ``y = A z``.

Every ensemble is represented by a :class:`MeasurementOperator` holding a
dense or sparse ``M x n`` matrix over the ambient space of steering vectors
(``n = prod(2N_l + 1)``) plus metadata. The radar ensembles also carry their
probing signals, which give a fast closed-form atom evaluation

    A f(tau, nu) = F_nu T_tau x,   [F_nu T_tau x]_p = e^{i 2 pi p nu} x~(p - L tau),

where ``x~`` is the band-limited (frequencies ``-N..N``) periodic interpolant
of the probe, i.e. ``T_tau`` is a delay by ``L tau`` samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._rng import SeedLike, make_rng
from .spectral import TWO_PI, as_points, frequency_indices, half_widths, steering_matrix, wrap_diff

__all__ = [
    "MeasurementOperator",
    "CoherenceReport",
    "subsampled_orthogonal",
    "random_time_samples",
    "gaussian_operator",
    "sors_operator",
    "hadamard_family",
    "gabor_radar_operator",
    "gabor_matrix",
    "mimo_radar_operator",
    "time_frequency_shift",
    "dirichlet",
    "empirical_coherence",
    "save_operator",
    "load_operator",
    "ENSEMBLES",
]

SCHEMA_VERSION = 1
ENSEMBLES = ("subsampled", "time_samples", "gaussian", "sors", "gabor", "mimo")
PAYLOAD_DTYPES = {"complex64": "<c8", "complex128": "<c16"}


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    """Linear map from the ambient space ``C^n`` to ``C^M``.

    Attributes:
        matrix: Dense ``ndarray`` or ``scipy.sparse`` CSR matrix, ``M x n``.
        ensemble: Ensemble tag, one of :data:`ENSEMBLES`.
        N: Per-coordinate half-widths of the ambient space.
        seed: Seed the operator was drawn from (None when user-supplied).
        params: JSON-serializable construction parameters.
        probes: Probing signals for the radar ensembles, shape ``(N_T, L)``.
        row_family: Scaled row family for row-sampled ensembles, used for
            exhaustive isotropy averages.
        isotropy_scale: Factor ``c`` with ``E[(cA)^H (cA)] = I``.
    """

    matrix: Any
    ensemble: str
    N: tuple[int, ...]
    seed: int | None = None
    params: dict = field(default_factory=dict)
    probes: np.ndarray | None = None
    row_family: Any = None
    isotropy_scale: float = 1.0

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.matrix.shape)

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def d(self) -> int:
        return len(self.N)

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return tuple(2 * k + 1 for k in self.N)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def forward(self, z: np.ndarray) -> np.ndarray:
        """``A z``; ``z`` may be a vector or an ``n x k`` block."""
        return self.matrix @ z

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """``A^H y``."""
        return self.matrix.conj().T @ y

    __matmul__ = forward

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def atoms(self, points) -> np.ndarray:
        """Columns ``A f(r_k)``, shape ``(M, S)``.

        Uses the closed-form time-frequency shift for the radar ensembles.
        """
        pts = as_points(points, self.d)
        if self.ensemble == "gabor":
            return _gabor_atoms(self.probes[0], pts)
        if self.ensemble == "mimo":
            return _mimo_atoms(self.probes, self.params["N_R"], self.N[0], pts)
        return self.forward(steering_matrix(pts, self.N))

    def atoms_dense_path(self, points) -> np.ndarray:
        """``A f(r_k)`` through the stored matrix, bypassing any fast path."""
        return self.forward(steering_matrix(as_points(points, self.d), self.N))

    def gram(self) -> np.ndarray:
        """Dense ``A A^H`` (``M x M``)."""
        G = self.matrix @ self.matrix.conj().T
        return G.toarray() if sp.issparse(G) else np.asarray(G)

    def rescaled(self) -> "MeasurementOperator":
        """Copy multiplied by :attr:`isotropy_scale`."""
        c = self.isotropy_scale
        return MeasurementOperator(self.matrix * c, self.ensemble, self.N, self.seed,
                                   dict(self.params, rescaled=True), self.probes,
                                   None if self.row_family is None else self.row_family * c, 1.0)


def _csr(rows, cols, vals, shape) -> sp.csr_matrix:
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def _pick_rows(rng: np.random.Generator, n_rows: int, M: int, replace: bool | None) -> np.ndarray:
    if replace is None:
        replace = M > n_rows
    if not replace and M > n_rows:
        raise ValueError(f"cannot draw {M} distinct rows out of {n_rows}")
    return rng.choice(n_rows, size=M, replace=replace)


def subsampled_orthogonal(N, M: int, seed: SeedLike = None, family="identity", d: int = 1,
                          replace: bool | None = None) -> MeasurementOperator:
    """Rows drawn uniformly from a scaled orthonormal system ``sqrt(n/M) U``.

    Args:
        N: Half-width(s) of the ambient space.
        M: Number of rows.
        seed: Seed of the row draw.
        family: ``"identity"``, ``"dft"`` (unitary DFT) or an explicit
            orthonormal ``n x n`` matrix.
        d: Dimension.
        replace: Draw rows with replacement. The default samples without
            replacement when ``M <= n`` (a uniformly random row subset) and
            with replacement otherwise.
    """
    Ns = half_widths(N, d)
    n = int(np.prod([2 * k + 1 for k in Ns]))
    if M < 1:
        raise ValueError("M must be positive")
    rng = make_rng(seed, "subsampled")
    rows = _pick_rows(rng, n, M, replace)
    scale = np.sqrt(n / M)
    if isinstance(family, str) and family == "identity":
        mat = _csr(np.arange(M), rows, np.full(M, scale, dtype=complex), (M, n))
        fam = sp.identity(n, dtype=complex, format="csr") * scale
        tag = "identity"
    else:
        if isinstance(family, str):
            if family != "dft":
                raise ValueError(f"unknown orthogonal family {family!r}")
            U = scipy.linalg.dft(n, scale="sqrtn")
        else:
            U = np.asarray(family, dtype=complex)
            if U.shape != (n, n) or not np.allclose(U.conj().T @ U, np.eye(n), atol=1e-10):
                raise ValueError("orthogonal family must be an n x n matrix with U^H U = I")
        fam = scale * U
        mat = fam[rows]
        tag = family if isinstance(family, str) else "custom"
    return MeasurementOperator(mat, "subsampled", Ns, _seed_value(seed),
                               {"family": tag, "rows": rows.tolist(), "M": M}, None, fam, 1.0)


def dirichlet(x, L: int) -> np.ndarray:
    """``D_L(x) = (1/L) sum_{p=-N}^{N} e^{i 2 pi p x}`` for odd ``L = 2N+1``."""
    x = wrap_diff(x, 0.0)                         # 1-periodic for odd L
    return np.sinc(L * x) / np.sinc(x)


def random_time_samples(N: int, M: int, seed: SeedLike = None) -> MeasurementOperator:
    """Samples of the trigonometric polynomial ``z(t)`` at ``t_r ~ U[0, L-1]``.

    Row ``r`` is real: ``sqrt(L/M) D_L((l - t_r)/L)`` for ``l = -N..N``, so that
    ``(A z)_r = sqrt(L/M) z~(t_r)`` with ``z~`` the period-``L`` trigonometric
    interpolant of the entries of ``z``. For on-grid frequencies represented in
    ``(-1/2, 1/2)`` this is ``sqrt(L/M) sum_k b_k e^{i 2 pi nu_k t_r}``.
    """
    (N,) = half_widths(N, 1)
    L = 2 * N + 1
    rng = make_rng(seed, "time_samples")
    t = rng.uniform(0.0, L - 1.0, size=M)
    ell = frequency_indices(N)
    mat = np.sqrt(L / M) * dirichlet((ell[None, :] - t[:, None]) / L, L)
    return MeasurementOperator(mat.astype(complex), "time_samples", (N,), _seed_value(seed),
                               {"t": t.tolist(), "M": M}, None, None, 1.0)


def gaussian_operator(N, M: int, seed: SeedLike = None, d: int = 1) -> MeasurementOperator:
    """Dense real Gaussian matrix with i.i.d. ``N(0, 1/M)`` entries."""
    Ns = half_widths(N, d)
    n = int(np.prod([2 * k + 1 for k in Ns]))
    rng = make_rng(seed, "gaussian")
    mat = rng.standard_normal((M, n)) / np.sqrt(M)
    return MeasurementOperator(mat.astype(complex), "gaussian", Ns, _seed_value(seed),
                               {"M": M}, None, None, 1.0)


def hadamard_family(n: int) -> np.ndarray:
    """Orthonormal Walsh-Hadamard matrix ``H / sqrt(n)``; ``n`` a power of two."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"Hadamard size must be a power of two, got {n}")
    return scipy.linalg.hadamard(n).astype(float) / np.sqrt(n)


def sors_operator(N: int, M: int, seed: SeedLike = None, n: int | None = None,
                  replace: bool | None = None) -> MeasurementOperator:
    """Subsampled orthonormal system with random signs, ``A = sqrt(n/M) P H D``.

    ``H`` is the normalized Hadamard matrix of size ``n`` (a power of two, by
    default the smallest one >= L), ``D`` a random +-1 diagonal and ``P`` a row
    selection. Steering vectors of length ``L = 2N+1`` are zero-padded to
    ``n``, so the returned matrix keeps only the first ``L`` columns.
    """
    (N,) = half_widths(N, 1)
    L = 2 * N + 1
    if n is None:
        n = 1 << (L - 1).bit_length()
    if n < L:
        raise ValueError(f"SORS size n={n} is smaller than L={L}")
    H = hadamard_family(n)
    rng = make_rng(seed, "sors")
    signs = rng.choice([-1.0, 1.0], size=n)
    rows = _pick_rows(rng, n, M, replace)
    fam = np.sqrt(n / M) * (H * signs[None, :])[:, :L]
    return MeasurementOperator(fam[rows].astype(complex), "sors", (N,), _seed_value(seed),
                               {"n": n, "rows": rows.tolist(), "signs": signs.tolist(), "M": M},
                               None, fam.astype(complex), 1.0)


# --- radar ensembles ---------------------------------------------------------

def _centered_dft(L: int) -> np.ndarray:
    # E[q, m] = exp(-i 2 pi q m / L), q, m = -N..N
    idx = frequency_indices((L - 1) // 2)
    return np.exp(-1j * TWO_PI * np.outer(idx, idx) / L)


def time_frequency_shift(x: np.ndarray, tau, nu) -> np.ndarray:
    """``F_nu T_tau x`` for one or several ``(tau, nu)`` pairs.

    Args:
        x: Probe of odd length ``L``, entries indexed ``-N..N``.
        tau, nu: Scalars or equal-length arrays.

    Returns:
        Array of shape ``(L,)`` or ``(P, L)``.
    """
    x = np.asarray(x)
    L = x.size
    if L % 2 == 0:
        raise ValueError("probe length must be odd")
    tau_a, nu_a = np.atleast_1d(tau).astype(float), np.atleast_1d(nu).astype(float)
    E = _centered_dft(L)
    q = frequency_indices((L - 1) // 2)
    Xh = E @ x
    spec = Xh[None, :] * np.exp(-1j * TWO_PI * tau_a[:, None] * q[None, :])
    shifted = spec @ E.conj() / L                 # x~(p - L tau), rows over p
    out = shifted * np.exp(1j * TWO_PI * nu_a[:, None] * q[None, :])
    return out[0] if np.ndim(tau) == 0 and np.ndim(nu) == 0 else out


def _gabor_atoms(x: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return time_frequency_shift(x, pts[:, 0], pts[:, 1]).T


def _mimo_atoms(probes: np.ndarray, N_R: int, N: int, pts: np.ndarray) -> np.ndarray:
    N_T, L = probes.shape
    Nb = (N_T * N_R - 1) // 2
    P = pts.shape[0]
    beta = pts[:, 0]
    shifted = np.stack([time_frequency_shift(x, pts[:, 1], pts[:, 2]) for x in probes], axis=1)
    j = np.arange(N_T)
    tx = np.einsum("kj,kjp->kp", np.exp(1j * TWO_PI * beta[:, None] * j[None, :]), shifted)  # (P, L)
    r = np.arange(N_R)
    rx = np.exp(1j * TWO_PI * beta[:, None] * (r[None, :] * N_T - Nb))                       # (P, N_R)
    return (rx[:, :, None] * tx[:, None, :]).reshape(P, N_R * L).T


def _gabor_entries(x: np.ndarray) -> np.ndarray:
    # alpha[a, p] = X^_{-a} e^{-i 2 pi a p / L} / L, the only nonzero of column (a, b=p)
    L = x.size
    E = _centered_dft(L)
    Xh = E @ x
    return Xh[::-1][:, None] * E / L


def gabor_matrix(x: np.ndarray) -> np.ndarray:
    """Dense Gabor matrix ``[G_x]_{p, (k, l)} = x_{p-l} e^{i 2 pi k p / L}``.

    Indices ``p, k, l`` run over ``-N..N`` and ``x`` is extended periodically.
    """
    x = np.asarray(x)
    L = x.size
    idx = np.arange(-(L // 2), L // 2 + 1)
    xs = x[(idx[:, None] - idx[None, :] + L // 2) % L]            # [p, l] -> x_{p-l}
    mod = np.exp(1j * TWO_PI * np.outer(idx, idx) / L)             # [p, k]
    return (mod[:, :, None] * xs[:, None, :]).reshape(L, L * L)


def gabor_radar_operator(x: np.ndarray | None = None, N: int | None = None,
                         seed: SeedLike = None) -> MeasurementOperator:
    """Super-resolution radar operator over ``(tau, nu)`` with ``L^2`` columns.

    Equal to ``G_x F2^H J`` where ``F2^H`` is the inverse two-dimensional DFT
    on the ``-N..N`` index grid and ``J`` reverses both indices, so that
    ``A f((tau, nu)) = F_nu T_tau x``. Each column has a single nonzero, so the
    matrix is stored sparse.

    Args:
        x: Probe of length ``L = 2N+1``; drawn standard Gaussian when omitted.
        N: Half-width; required when ``x`` is omitted.
        seed: Seed for the probe draw.
    """
    if x is None:
        if N is None:
            raise ValueError("need a probe x or a half-width N")
        x = make_rng(seed, "gabor").standard_normal(2 * N + 1)
    x = np.asarray(x, dtype=complex if np.iscomplexobj(x) else float)
    L = x.size
    if N is None:
        if L % 2 == 0:
            raise ValueError(f"probe length must be odd (L = 2N+1), got {L}")
        N = (L - 1) // 2
    if L != 2 * N + 1:
        raise ValueError(f"probe length {L} does not match L = 2N+1 = {2 * N + 1}")
    alpha = _gabor_entries(x)
    a, p = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    mat = _csr(p.ravel(), (a * L + p).ravel(), alpha.ravel(), (L, L * L))
    return MeasurementOperator(mat, "gabor", (N, N), _seed_value(seed), {"L": L},
                               x[None, :], None, float(np.sqrt(L)))


def mimo_radar_operator(N_T: int, N_R: int, N: int, seed: SeedLike = None,
                        probes: np.ndarray | None = None) -> MeasurementOperator:
    """MIMO radar operator over ``(beta, tau, nu)``.

    Receive antenna ``r`` records ``sum_j e^{i 2 pi beta (r N_T + j)} F_nu T_tau x_j``.
    The angle index ``q = r N_T + j - N_beta`` runs over ``-N_beta..N_beta`` with
    ``2 N_beta + 1 = N_T N_R``, so the angle phase is referenced to the array
    centre; Eq.-style uncentered phases differ by ``e^{i 2 pi beta N_beta}``,
    which is absorbed into the target amplitude.

    Args:
        N_T, N_R: Transmit and receive antenna counts; ``N_T N_R`` must be odd.
        N: Delay/Doppler half-width, ``L = 2N+1``.
        seed: Seed for the probe draw.
        probes: Optional ``(N_T, L)`` probing signals; drawn i.i.d.
            ``N(0, 1/(N_T L))`` when omitted.

    Returns:
        Operator with ``M = N_R L`` rows and ``N_T N_R L^2`` columns.
    """
    L = 2 * N + 1
    Lb = N_T * N_R
    if Lb % 2 == 0:
        raise ValueError(f"N_T * N_R = {Lb} must be odd for a centred angle index")
    if probes is None:
        probes = make_rng(seed, "mimo").standard_normal((N_T, L)) / np.sqrt(N_T * L)
    probes = np.asarray(probes)
    if probes.shape != (N_T, L):
        raise ValueError(f"probes must have shape {(N_T, L)}, got {probes.shape}")
    rows, cols, vals = [], [], []
    a, p = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    for r in range(N_R):
        for j in range(N_T):
            q = r * N_T + j                      # shifted angle index, 0..Lb-1
            alpha = _gabor_entries(probes[j])
            rows.append((r * L + p).ravel())
            cols.append(((q * L + a) * L + p).ravel())
            vals.append(alpha.ravel())
    mat = _csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (N_R * L, Lb * L * L))
    Nb = (Lb - 1) // 2
    return MeasurementOperator(mat, "mimo", (Nb, N, N), _seed_value(seed),
                               {"N_T": N_T, "N_R": N_R, "L": L}, probes, None,
                               float(np.sqrt(L * L * N_T)))


# --- diagnostics -------------------------------------------------------------

@dataclass(frozen=True)
class CoherenceReport:
    """Incoherence parameter and isotropy residual.

    ``isotropy_reference`` is ``"exhaustive"`` when the second moment is the
    exact average over the row family, ``"empirical"`` when it is
    ``(1/M) sum_r a_r a_r^H`` of the drawn (isotropy-rescaled) rows.
    """

    mu_hat: float
    isotropy_residual: float
    isotropy_reference: str


def empirical_coherence(op: MeasurementOperator, isotropy: bool = True) -> CoherenceReport:
    """``mu_hat = (M/n) max_r ||a_r||_1^2`` and the isotropy residual."""
    c = op.isotropy_scale
    A = op.matrix
    if sp.issparse(A):
        l1 = np.asarray(abs(A).sum(axis=1)).ravel() * c
    else:
        l1 = np.abs(A).sum(axis=1) * c
    mu = float(op.M / op.n * np.max(l1) ** 2)
    if not isotropy:
        return CoherenceReport(mu, float("nan"), "skipped")
    if op.row_family is not None:
        U = op.row_family * c
        second = (U.conj().T @ U) / U.shape[0]
        if sp.issparse(second):
            second = second.toarray()
        resid = float(np.linalg.norm(second - np.eye(op.n) / op.M, 2))
        return CoherenceReport(mu, resid, "exhaustive")
    resid = _op_norm_minus_identity(A, c) / op.M
    return CoherenceReport(mu, float(resid), "empirical")


def _op_norm_minus_identity(A, c: float) -> float:
    n = A.shape[1]
    if n <= 2048:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        G = c * c * (dense.conj().T @ dense)
        return float(np.abs(np.linalg.eigvalsh(G - np.eye(n))).max())
    AH = A.conj().T

    def mv(v):
        return c * c * (AH @ (A @ v)) - v

    lin = spla.LinearOperator((n, n), matvec=mv, dtype=complex)
    val = spla.eigsh(lin, k=1, which="LM", return_eigenvectors=False, tol=1e-6)
    return float(np.abs(val).max())


# --- serialization -----------------------------------------------------------

def _seed_value(seed) -> int | None:
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def save_operator(op: MeasurementOperator, path, dtype: str = "complex64") -> tuple[Path, Path]:
    """Write ``<path>.json`` (metadata) and ``<path>.bin`` (little-endian payload).

    The payload is the probe array for the radar ensembles and the dense
    matrix otherwise. ``dtype`` is ``"complex64"`` or ``"complex128"``.
    """
    if dtype not in PAYLOAD_DTYPES:
        raise ValueError(f"payload dtype must be one of {sorted(PAYLOAD_DTYPES)}")
    base = Path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    payload = op.probes if op.ensemble in ("gabor", "mimo") else op.dense()
    payload = np.ascontiguousarray(payload, dtype=PAYLOAD_DTYPES[dtype])
    meta = {
        "schema_version": SCHEMA_VERSION,
        "ensemble": op.ensemble,
        "N": list(op.N),
        "seed": op.seed,
        "shape": list(op.shape),
        "params": op.params,
        "isotropy_scale": op.isotropy_scale,
        "payload": {"kind": "probes" if op.ensemble in ("gabor", "mimo") else "matrix",
                    "dtype": dtype, "byte_order": "little", "shape": list(payload.shape)},
    }
    jpath, bpath = base.with_suffix(".json"), base.with_suffix(".bin")
    jpath.write_text(json.dumps(meta, indent=2))
    bpath.write_bytes(payload.tobytes())
    return jpath, bpath


def _restore_rows(ensemble: str, payload: np.ndarray, Ns, prm: dict):
    # row families are not stored; they are rebuilt from the saved parameters
    n = int(np.prod([2 * k + 1 for k in Ns]))
    if ensemble == "subsampled" and prm.get("family") in ("identity", "dft"):
        scale = np.sqrt(n / prm["M"])
        if prm["family"] == "identity":
            return sp.csr_matrix(payload), sp.identity(n, dtype=complex, format="csr") * scale
        return payload, scale * scipy.linalg.dft(n, scale="sqrtn")
    if ensemble == "sors":
        H = hadamard_family(prm["n"]) * np.asarray(prm["signs"])[None, :]
        return payload, (np.sqrt(prm["n"] / prm["M"]) * H[:, :n]).astype(complex)
    return payload, None


def load_operator(path) -> MeasurementOperator:
    """Inverse of :func:`save_operator`."""
    base = Path(path)
    meta = json.loads(base.with_suffix(".json").read_text())
    pinfo = meta["payload"]
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype=PAYLOAD_DTYPES[pinfo["dtype"]])
    payload = raw.reshape(pinfo["shape"]).astype(complex)
    Ns = tuple(meta["N"])
    prm = meta["params"]
    if meta["ensemble"] == "gabor":
        op = gabor_radar_operator(payload[0], Ns[1])
    elif meta["ensemble"] == "mimo":
        op = mimo_radar_operator(prm["N_T"], prm["N_R"], Ns[1], probes=payload)
    else:
        mat, fam = _restore_rows(meta["ensemble"], payload, Ns, prm)
        op = MeasurementOperator(mat, meta["ensemble"], Ns, None, prm, None, fam,
                                 meta["isotropy_scale"])
    return MeasurementOperator(op.matrix, op.ensemble, op.N, meta["seed"], prm, op.probes,
                               op.row_family, meta["isotropy_scale"])
