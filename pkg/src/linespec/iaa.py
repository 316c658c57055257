"""Iterative adaptive approach (IAA-APES) over a grid dictionary.

Each iteration forms ``R = D diag(p) D^H + lambda I`` and updates

    s_i = d_i^H R^{-1} y / (d_i^H R^{-1} d_i),    p_i = |s_i|^2,

starting from the matched filter ``p_i = |d_i^H y|^2 / ||d_i||^4``.

Radar dictionaries have atoms ``d = a(beta) kron (e^{i 2 pi q nu} h_q(beta, tau))``,
so ``R`` and the quadratic forms ``d^H R^{-1} d`` reduce to sums over the
lag ``q - q'`` followed by an FFT along the Doppler axis. Other ensembles use
chunked dense columns.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp

from .gridlab import GridDictionary, GridSpec, extract_support
from .sensing import time_frequency_shift
from .spectral import TWO_PI, frequency_indices

__all__ = ["IaaConfig", "IaaResult", "SingularCovarianceError", "iaa_solve"]

SCHEMA_VERSION = 1


class SingularCovarianceError(np.linalg.LinAlgError):
    """``R`` is singular and no diagonal loading was requested."""


@dataclass(frozen=True)
class IaaConfig:
    """IAA settings.

    Attributes:
        iterations: Number of reweighting passes (at least 1).
        loading: Diagonal loading. Relative to ``trace(R) / M`` when
            ``loading_mode="relative"``, an absolute value otherwise.
        loading_mode: ``"relative"`` or ``"absolute"``.
        structured: Use the radar fast path when the dictionary allows it.
        chunk: Column chunk size of the dense path.
        min_fraction, merge_radius, max_peaks: Peak extraction on the powers.
    """

    iterations: int = 15
    loading: float = 1e-8
    loading_mode: str = "relative"
    structured: bool = True
    chunk: int = 4096
    min_fraction: float = 0.05
    merge_radius: int = 1
    max_peaks: int | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.loading < 0:
            raise ValueError("loading must be >= 0")
        if self.loading_mode not in ("relative", "absolute"):
            raise ValueError(f"unknown loading mode {self.loading_mode!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "IaaConfig":
        bad = set(d) - set(cls.__dataclass_fields__)
        if bad:
            raise ValueError(f"unknown IAA settings: {sorted(bad)}")
        return cls(**d)


@dataclass(eq=False)
class IaaResult:
    """Grid powers and amplitudes with the extracted peaks."""

    power: np.ndarray
    amplitudes: np.ndarray
    spec: GridSpec
    iterations: int
    config: IaaConfig
    support: list[int] = field(default_factory=list)
    locations: np.ndarray | None = None
    peak_amplitudes: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": SCHEMA_VERSION,
            "method": "iaa",
            "grid": list(self.spec.K),
            "iterations": self.iterations,
            "config": asdict(self.config),
            "support": [int(i) for i in self.support],
            "locations": [] if self.locations is None else self.locations.tolist(),
            "amplitudes": [[float(a.real), float(a.imag)] for a in (self.peak_amplitudes if self.peak_amplitudes is not None else [])],
            "diagnostics": {k: v for k, v in self.diagnostics.items() if np.isscalar(v) or isinstance(v, str)},
        })


# --- dense path --------------------------------------------------------------

class _DensePath:
    def __init__(self, dic: GridDictionary, chunk: int):
        self.dic, self.chunk = dic, chunk
        self.K = dic.size
        self.norm2 = np.concatenate([np.sum(np.abs(dic.columns(np.arange(a, min(a + chunk, self.K)))) ** 2, axis=0)
                                     for a in range(0, self.K, chunk)])

    def _chunks(self):
        for a in range(0, self.K, self.chunk):
            idx = np.arange(a, min(a + self.chunk, self.K))
            yield idx, self.dic.columns(idx)

    def covariance(self, p: np.ndarray) -> np.ndarray:
        R = np.zeros((self.dic.M, self.dic.M), dtype=complex)
        for idx, D in self._chunks():
            R += (D * p[idx]) @ D.conj().T
        return R

    def quad(self, Q: np.ndarray) -> np.ndarray:
        out = np.empty(self.K)
        for idx, D in self._chunks():
            out[idx] = np.real(np.sum(D.conj() * (Q @ D), axis=0))
        return out


# --- radar path ----------------------------------------------------------------

class _RadarPath:
    """Structured covariance and quadratic forms for Gabor and MIMO dictionaries."""

    def __init__(self, dic: GridDictionary):
        op, spec = dic.operator, dic.spec
        if op.ensemble == "gabor":
            K1, (K2, K3) = 1, spec.K
            probes = op.probes[:1]
            N_T = N_R = 1
            beta = np.zeros(1)
            shift = 0
        else:
            K1, K2, K3 = spec.K
            probes = op.probes
            N_T, N_R = op.params["N_T"], op.params["N_R"]
            beta = np.arange(K1) / K1
            shift = (N_T * N_R - 1) // 2
        L = probes.shape[1]
        tau = np.arange(K2) / K2
        X = np.stack([time_frequency_shift(x, tau, np.zeros(K2)) for x in probes])     # (N_T, K2, L)
        tx = np.exp(1j * TWO_PI * beta[:, None] * np.arange(N_T)[None, :])             # (K1, N_T)
        self.h = np.einsum("nj,jkq->nkq", tx, X)                                        # (K1, K2, L)
        self.a = np.exp(1j * TWO_PI * beta[:, None] * (np.arange(N_R)[None, :] * N_T - shift))
        self.K1, self.K2, self.K3, self.L, self.N_R = K1, K2, K3, L, N_R
        q = frequency_indices((L - 1) // 2)
        self.lag = np.mod(q[:, None] - q[None, :], K3).astype(np.int64)   # (L, L)
        flat = self.lag.ravel()
        self.sel = sp.csr_matrix((np.ones(flat.size), (np.arange(flat.size), flat)), shape=(flat.size, K3))
        self.norm2 = np.repeat(N_R * np.sum(np.abs(self.h) ** 2, axis=2).ravel(), K3)

    def covariance(self, p: np.ndarray) -> np.ndarray:
        K1, K2, K3, L, NR = self.K1, self.K2, self.K3, self.L, self.N_R
        P = np.asarray(p, dtype=float).reshape(K1, K2, K3)
        Ph = scipy.fft.ifft(P, axis=2, norm="forward")            # sum_n p e^{+i 2 pi lag n / K3}
        R4 = np.zeros((NR, L, NR, L), dtype=complex)
        for n1 in range(K1):
            h = self.h[n1]
            T = np.einsum("kq,kp,kqp->qp", h, h.conj(), Ph[n1][:, self.lag])
            R4 += np.einsum("r,s,qp->rqsp", self.a[n1], self.a[n1].conj(), T)
        return R4.reshape(NR * L, NR * L)

    def quad(self, Q: np.ndarray) -> np.ndarray:
        K1, K2, K3, L, NR = self.K1, self.K2, self.K3, self.L, self.N_R
        Q4 = Q.reshape(NR, L, NR, L)
        Qb = np.einsum("nr,rqsp,ns->nqp", self.a.conj(), Q4, self.a)   # (K1, L, L)
        out = np.empty((K1, K2, K3))
        for n1 in range(K1):
            h = self.h[n1]
            C = (h.conj()[:, :, None] * h[:, None, :] * Qb[n1][None]).reshape(K2, L * L)
            lagsum = (self.sel.T @ C.T).T                           # (K2, K3), summed per lag mod K3
            out[n1] = np.real(scipy.fft.fft(lagsum, axis=1))
        return out.ravel()


def _radar_ok(dic: GridDictionary) -> bool:
    op = dic.operator
    return op.ensemble in ("gabor", "mimo") and op.probes is not None


def _factor(R: np.ndarray, loading: float, mode: str, M: int):
    lam = loading * (np.trace(R).real / M) if mode == "relative" else loading
    Rl = R + lam * np.eye(M)
    try:
        return scipy.linalg.cho_factor(Rl, lower=True), lam
    except np.linalg.LinAlgError:
        if loading == 0:
            raise SingularCovarianceError("covariance is singular; use diagonal loading") from None
        raise


def iaa_solve(dictionary: GridDictionary, y: np.ndarray, config: IaaConfig | None = None) -> IaaResult:
    """Run IAA on ``y`` over the dictionary grid.

    Args:
        dictionary: Grid dictionary ``B = A F_grid``.
        y: Measurements of length ``M``.
        config: Settings; defaults to :class:`IaaConfig`.

    Returns:
        :class:`IaaResult` with grid powers, grid amplitudes and peaks
        extracted from the powers.

    Raises:
        SingularCovarianceError: If ``R`` is singular and ``loading == 0``.
    """
    cfg = config or IaaConfig()
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=complex).ravel()
    M, K = dictionary.M, dictionary.size
    if y.size != M:
        raise ValueError(f"y has length {y.size}, expected M = {M}")
    structured = cfg.structured and _radar_ok(dictionary)
    diag = {"path": "radar" if structured else "dense"}
    if not np.any(y):
        z = np.zeros(K)
        return IaaResult(z, z.astype(complex), dictionary.spec, 0, cfg, [], np.zeros((0, dictionary.spec.d)),
                         np.zeros(0, dtype=complex), diag)
    path = _RadarPath(dictionary) if structured else _DensePath(dictionary, cfg.chunk)
    norm2 = path.norm2
    s = dictionary.adjoint(y) / norm2
    p = np.abs(s) ** 2
    for it in range(1, cfg.iterations + 1):
        R = path.covariance(p)
        cf, lam = _factor(R, cfg.loading, cfg.loading_mode, M)
        num = dictionary.adjoint(scipy.linalg.cho_solve(cf, y))
        Q = scipy.linalg.cho_solve(cf, np.eye(M))
        den = path.quad(0.5 * (Q + Q.conj().T))
        s = num / den
        p = np.abs(s) ** 2
    diag.update(loading_value=float(lam), seconds=time.perf_counter() - t0)
    peaks = extract_support(p, dictionary.spec.K, cfg.min_fraction, cfg.merge_radius, cfg.max_peaks)
    support = [pk.index for pk in peaks]
    locs = dictionary.spec.points(support) if support else np.zeros((0, dictionary.spec.d))
    return IaaResult(p, s, dictionary.spec, cfg.iterations, cfg, support, locs,
                     s[support] if support else np.zeros(0, dtype=complex), diag)
