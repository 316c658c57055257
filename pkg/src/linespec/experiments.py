"""Scenario generation, noise, metrics and Monte Carlo sweeps.

A sweep runs, for every trial, one scene and one operator draw shared by all
(SRF, SNR) cells, so cells are compared at matched seeds. Trial ``t`` uses the
integer seed ``trial_seed(master, t)``; every draw inside the trial comes from
a labelled substream of that seed, so any record can be replayed from
``(scenario, master seed, trial)`` alone.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._rng import make_rng
from .certifier import (CertificateProblem, SingularSystemError, build_deterministic_certificate)
from .gridlab import (GridDictionary, GridSpec, SolverConfig, default_eta, solve_l1_equality,
                      solve_l1_err)
from .iaa import IaaConfig, iaa_solve
from .sensing import (MeasurementOperator, gabor_radar_operator, gaussian_operator,
                      mimo_radar_operator, random_time_samples, sors_operator,
                      subsampled_orthogonal)
from .spectral import Mixture, check_separation, default_separation, wrap_diff

__all__ = [
    "ConfigError",
    "Scenario",
    "TrialRecord",
    "SweepResult",
    "PRESETS",
    "preset",
    "load_config",
    "scenario_from_text",
    "scenario_to_text",
    "trial_seed",
    "make_operator",
    "base_grid",
    "generate_scene",
    "add_noise",
    "resolution_error",
    "run_trial",
    "run_sweep",
    "write_outputs",
    "TRIAL_COLUMNS",
    "CERT_COLUMNS",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENSEMBLES = ("mimo", "gabor", "subsampled", "gaussian", "random_time", "sors")
METHODS = ("l1", "l1_err", "iaa")
TRIAL_COLUMNS = ("srf", "snr_db", "trial", "resolution_error", "converged", "seconds",
                 "method", "seed", "n_estimated", "exact_support", "amplitude_error", "iterations")
CERT_COLUMNS = ("trial", "seed", "S", "norm_i_minus_dbar", "norm_dbar_inv", "alpha_inf",
                "alpha_l_inf", "re_alpha_min", "im_alpha_max", "separation_ratio", "seconds")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --- scenario ----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Experiment description; every field has a flat config key.

    Attributes:
        name: Label used in output metadata.
        kind: ``"recovery"`` or ``"certificate"`` (constant suite for the
            deterministic interpolation system).
        ensemble: Measurement ensemble, one of ``ENSEMBLES``.
        N: Half-width, ``L = 2N + 1``.
        N_T, N_R: MIMO antenna counts.
        d: Dimension for the non-radar ensembles.
        M: Number of measurements for the non-radar ensembles.
        S: Number of targets.
        domain: ``"box"`` (first coordinate in ``[0,1)``, the others in
            ``[0, box]``), ``"unit"`` (``[0,1)^d``) or ``"fig3"``
            (deterministic ``k / base``).
        box: Upper edge of the box domain; defaults to ``2/sqrt(L)``.
        snap: ``"off"``, ``"coarse"`` (base grid) or ``"grid"`` (recovery
            grid at the first SRF).
        separation: ``"none"``, ``"max"`` (``2/N`` in 1D, ``5/N`` max form
            otherwise) or ``"or"`` (MIMO or-form, see :func:`separation_thresholds`).
        amplitudes: ``"disc"`` (uniform in the unit disc) or ``"phase"``
            (unit modulus, uniform phase).
        srf: Super-resolution factors.
        snr_db: SNR list in dB; ``inf`` means noiseless.
        trials: Trials per cell.
        seed: Master seed.
        methods: Recovery methods from ``METHODS``. ``l1_err`` falls back to
            ``l1`` on noiseless cells.
        eta_scale: Multiplier on the default ``eta``.
        max_peaks: Peaks kept per estimate; defaults to ``S``.
        workers: Worker processes for trials (1 = sequential).
        solver: ADMM and extraction settings.
        iaa: IAA settings.
    """

    name: str = "custom"
    kind: str = "recovery"
    ensemble: str = "mimo"
    N: int = 20
    N_T: int = 3
    N_R: int = 3
    d: int = 1
    M: int | None = None
    S: int = 5
    domain: str = "box"
    box: float | None = None
    snap: str = "off"
    separation: str = "none"
    amplitudes: str = "disc"
    srf: tuple = (1.0,)
    snr_db: tuple = (math.inf,)
    trials: int = 10
    seed: int = 0
    methods: tuple = ("l1_err",)
    eta_scale: float = 1.0
    max_peaks: int | None = None
    workers: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    iaa: IaaConfig = field(default_factory=IaaConfig)

    def __post_init__(self):
        checks = [
            (self.kind in ("recovery", "certificate"), f"unknown kind {self.kind!r}"),
            (self.ensemble in ENSEMBLES, f"unknown ensemble {self.ensemble!r}"),
            (self.domain in ("box", "unit", "fig3"), f"unknown domain {self.domain!r}"),
            (self.snap in ("off", "coarse", "grid"), f"unknown snap mode {self.snap!r}"),
            (self.separation in ("none", "max", "or"), f"unknown separation {self.separation!r}"),
            (self.amplitudes in ("disc", "phase"), f"unknown amplitude law {self.amplitudes!r}"),
            (all(m in METHODS for m in self.methods), f"unknown method in {self.methods}"),
            (self.N >= 1 and self.S >= 1 and self.trials >= 1, "N, S and trials must be positive"),
            (len(self.srf) >= 1 and all(s >= 1 for s in self.srf), "srf values must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        if self.ensemble not in ("mimo", "gabor") and self.kind == "recovery":
            checks.append((self.M is not None and self.M >= 1, f"ensemble {self.ensemble} needs M"))
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def L(self) -> int:
        return 2 * self.N + 1

    @property
    def dim(self) -> int:
        return {"mimo": 3, "gabor": 2}.get(self.ensemble, self.d)

    def replace(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)


def base_grid(sc: Scenario) -> tuple[int, ...]:
    """Coarse grid the SRF refers to; also the resolution-error weights."""
    if sc.ensemble == "mimo":
        return (sc.N_T * sc.N_R, sc.L, sc.L)
    return (sc.L,) * sc.dim


def separation_thresholds(sc: Scenario) -> tuple[str, tuple[float, ...]]:
    """Separation form and per-coordinate thresholds.

    The MIMO angle threshold ``10/(N_T N_R - 1)`` exceeds the largest possible
    wrap distance 1/2 at desk scale, so under the or-form only the delay or
    Doppler branch (``5/N``) can be met.
    """
    if sc.separation == "or" and sc.ensemble == "mimo":
        return "or", (10.0 / (sc.N_T * sc.N_R - 1), 5.0 / sc.N, 5.0 / sc.N)
    return "max", (default_separation(sc.N, sc.dim),) * sc.dim


def trial_seed(master: int, trial: int) -> int:
    """Integer seed of one trial, from a counter-based substream."""
    return int(make_rng(master, "trial", trial).integers(0, 2 ** 62))


def make_operator(sc: Scenario, seed: int) -> MeasurementOperator:
    s = int(make_rng(seed, "operator").integers(0, 2 ** 62))
    if sc.ensemble == "mimo":
        return mimo_radar_operator(sc.N_T, sc.N_R, sc.N, seed=s)
    if sc.ensemble == "gabor":
        return gabor_radar_operator(N=sc.N, seed=s)
    if sc.ensemble == "subsampled":
        return subsampled_orthogonal(sc.N, sc.M, seed=s, d=sc.dim)
    if sc.ensemble == "gaussian":
        return gaussian_operator(sc.N, sc.M, seed=s, d=sc.dim)
    if sc.ensemble == "random_time":
        return random_time_samples(sc.N, sc.M, seed=s)
    return sors_operator(sc.N, sc.M, seed=s)


def _mixture_N(sc: Scenario):
    if sc.ensemble == "mimo":
        return ((sc.N_T * sc.N_R - 1) // 2, sc.N, sc.N)
    return sc.N


def generate_scene(sc: Scenario, seed: int, max_tries: int = 10_000) -> Mixture:
    """Draw target locations and amplitudes for one trial.

    Locations follow ``sc.domain`` and are optionally snapped to the base or
    recovery grid; with separation enabled, draws are rejected until the
    support is separated. Amplitudes are uniform in the closed unit disc, or
    unit-modulus with uniform phase.
    """
    rng = make_rng(seed, "scene")
    d, S = sc.dim, sc.S
    base = np.asarray(base_grid(sc), dtype=float)
    if sc.snap == "grid":
        snap_K = np.asarray(GridSpec.from_srf(sc.srf[0], base_grid(sc)).K, dtype=float)
    elif sc.snap == "coarse":
        snap_K = base
    else:
        snap_K = None
    form, thr = separation_thresholds(sc)
    if sc.domain == "fig3":
        loc = np.arange(S)[:, None] / base[None, :]
    else:
        hi = np.ones(d)
        if sc.domain == "box":
            hi[1:] = sc.box if sc.box is not None else 2.0 / np.sqrt(sc.L)
        for _ in range(max_tries):
            loc = rng.random((S, d)) * hi
            if snap_K is not None:
                loc = np.mod(np.rint(loc * snap_K), snap_K) / snap_K
                if np.unique(np.rint(loc * snap_K), axis=0).shape[0] < S:
                    continue
            if sc.separation == "none":
                break
            if check_separation(loc, thresholds=thr, form=form).satisfied:
                break
        else:
            raise ConfigError(f"no separated support found after {max_tries} draws")
    phase = np.exp(2j * np.pi * rng.random(S))
    mag = np.ones(S) if sc.amplitudes == "phase" else np.sqrt(rng.random(S))
    return Mixture(mag * phase, loc, _mixture_N(sc))


def add_noise(y: np.ndarray, snr_db: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Add complex Gaussian noise at an exact realized SNR.

    The draw is rescaled so that ``||y||^2 / ||n||^2 = 10^(snr_db/10)``.

    Returns:
        ``(y + n, n)``; ``n = 0`` for ``snr_db = inf``.

    Raises:
        ValueError: If ``y = 0`` and the SNR is finite.
    """
    y = np.asarray(y, dtype=complex)
    if math.isinf(snr_db) and snr_db > 0:
        return y.copy(), np.zeros_like(y)
    py = float(np.vdot(y, y).real)
    if py == 0:
        raise ValueError("cannot set an SNR for a zero signal")
    rng = make_rng(seed, "noise")
    n = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    n *= np.sqrt(py / 10.0 ** (snr_db / 10.0) / float(np.vdot(n, n).real))
    return y + n, n


def resolution_error(true_locs, est_locs, weights) -> float:
    """Matched weighted wrap-around error, averaged over the true targets.

    True and estimated targets are paired by a minimum-cost assignment under
    ``||w * wrap(r_hat - r)||_2``. True targets left unmatched (fewer
    estimates) cost the weighted wrap diameter ``||w||_2 / 2``.
    """
    T = np.atleast_2d(np.asarray(true_locs, dtype=float))
    w = np.asarray(weights, dtype=float)
    penalty = 0.5 * float(np.linalg.norm(w))
    E = np.asarray(est_locs, dtype=float).reshape(-1, T.shape[1]) if np.size(est_locs) else np.zeros((0, T.shape[1]))
    if E.shape[0] == 0:
        return penalty
    D = np.linalg.norm(wrap_diff(T[:, None, :], E[None, :, :]) * w, axis=2)
    r, c = linear_sum_assignment(D)
    total = D[r, c].sum() + penalty * (T.shape[0] - r.size)
    return float(total / T.shape[0])


# --- trials --------------------------------------------------------------------

@dataclass
class TrialRecord:
    srf: float
    snr_db: float
    trial: int
    resolution_error: float
    converged: bool
    seconds: float
    method: str
    seed: int
    n_estimated: int
    exact_support: bool
    amplitude_error: float
    iterations: int
    true_locations: list = field(default_factory=list)
    estimated_locations: list = field(default_factory=list)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in TRIAL_COLUMNS}


def _estimate(method: str, dic: GridDictionary, y: np.ndarray, noise: np.ndarray, sc: Scenario):
    peaks = sc.max_peaks or sc.S
    if method == "iaa":
        res = iaa_solve(dic, y, dataclasses.replace(sc.iaa, max_peaks=peaks))
        return res.support, res.locations, res.peak_amplitudes, True, res.iterations
    cfg = dataclasses.replace(sc.solver, max_peaks=peaks)
    noise2 = float(np.vdot(noise, noise).real)
    if method == "l1" or noise2 == 0.0:
        sol = solve_l1_equality(dic, y, cfg)
    else:
        eta = sc.eta_scale * default_eta(dic.M, noise2 / dic.M)
        sol = solve_l1_err(dic, y, eta, cfg)
    return sol.support, sol.locations, sol.amplitudes, sol.converged, sol.iterations


def run_trial(sc: Scenario, trial: int) -> list[TrialRecord]:
    """All (SRF, SNR, method) cells of one trial at matched seeds."""
    seed = trial_seed(sc.seed, trial)
    op = make_operator(sc, seed)
    scene = generate_scene(sc, seed)
    y0 = op.atoms(scene.locations) @ scene.amplitudes
    weights = base_grid(sc)
    out = []
    for srf in sc.srf:
        dic = GridDictionary(op, GridSpec.from_srf(srf, base_grid(sc)))
        K = np.asarray(dic.spec.K, dtype=float)
        on_grid = np.abs(scene.locations * K - np.rint(scene.locations * K)).max() < 1e-9
        true_idx = sorted(dic.spec.nearest_index(scene.locations).tolist()) if on_grid else None
        for snr in sc.snr_db:
            y, n = add_noise(y0, snr, seed)
            for method in sc.methods:
                t0 = time.perf_counter()
                support, locs, amps, conv, iters = _estimate(method, dic, y, n, sc)
                secs = time.perf_counter() - t0
                exact = true_idx is not None and sorted(int(i) for i in support) == true_idx
                amp_err = math.nan
                if exact:
                    order = np.argsort(support)
                    truth = np.argsort(dic.spec.nearest_index(scene.locations))
                    amp_err = float(np.abs(np.asarray(amps)[order] - scene.amplitudes[truth]).max())
                if not conv:
                    log.warning("trial %d srf %s snr %s %s: solver did not converge", trial, srf, snr, method)
                out.append(TrialRecord(float(srf), float(snr), trial,
                                       resolution_error(scene.locations, locs, weights), bool(conv), secs,
                                       method, seed, len(support), bool(exact), amp_err, int(iters),
                                       scene.locations.tolist(), np.asarray(locs).tolist()))
    return out


def _certificate_trial(sc: Scenario, trial: int) -> dict:
    seed = trial_seed(sc.seed, trial)
    t0 = time.perf_counter()
    scene = generate_scene(sc.replace(separation="max" if sc.separation == "none" else sc.separation,
                                      domain="unit", snap="off"), seed)
    T = scene.locations
    phases = scene.amplitudes / np.abs(scene.amplitudes)
    cert = build_deterministic_certificate(CertificateProblem(T, phases, sc.N))
    D = cert.system.matrix
    ones = build_deterministic_certificate(CertificateProblem(T, np.ones(sc.S), sc.N))
    rep = check_separation(T, sc.N)
    a_l = np.abs(cert.kappa * cert.system.alpha_l).max()
    return {
        "trial": trial, "seed": seed, "S": sc.S,
        "norm_i_minus_dbar": float(np.linalg.norm(np.eye(D.shape[0]) - D, 2)),
        "norm_dbar_inv": float(np.linalg.norm(np.linalg.inv(D), 2)),
        "alpha_inf": float(np.abs(cert.system.alpha).max()),
        "alpha_l_inf": float(a_l),
        "re_alpha_min": float(ones.system.alpha.real.min()),
        "im_alpha_max": float(np.abs(ones.system.alpha.imag).max()),
        "separation_ratio": float(rep.min_ratio),
        "seconds": time.perf_counter() - t0,
    }


@dataclass
class SweepResult:
    scenario: Scenario
    records: list
    aggregate: list
    kind: str = "recovery"

    def trial_rows(self) -> list[dict]:
        return [r.row() if isinstance(r, TrialRecord) else r for r in self.records]


def _aggregate(records: list[TrialRecord]) -> list[dict]:
    cells: dict = {}
    for r in records:
        cells.setdefault((r.method, r.snr_db, r.srf), []).append(r)
    rows = []
    for (method, snr, srf), rs in sorted(cells.items(), key=lambda kv: (kv[0][0], -kv[0][1], kv[0][2])):
        e = np.array([r.resolution_error for r in rs])
        rows.append({"method": method, "snr_db": snr, "srf": srf, "trials": len(rs),
                     "mean_error": float(e.mean()),
                     "std_error": float(e.std(ddof=1)) if e.size > 1 else 0.0,
                     "exact_fraction": float(np.mean([r.exact_support for r in rs])),
                     "converged_fraction": float(np.mean([r.converged for r in rs])),
                     "mean_seconds": float(np.mean([r.seconds for r in rs]))})
    return rows


def _cert_aggregate(rows: list[dict]) -> list[dict]:
    keys = [k for k in CERT_COLUMNS if k not in ("trial", "seed", "S", "seconds")]
    agg = {"S": rows[0]["S"], "trials": len(rows)}
    for k in keys:
        v = np.array([r[k] for r in rows])
        agg[k + "_max"] = float(v.max())
        agg[k + "_min"] = float(v.min())
    return [agg]


def run_sweep(sc: Scenario, trials: list[int] | None = None) -> SweepResult:
    """Run every trial of the scenario and aggregate per cell.

    Trials run in ``sc.workers`` processes; records are sorted back into
    trial order before aggregation, so the output does not depend on the
    number of workers.
    """
    idx = list(range(sc.trials)) if trials is None else list(trials)
    fn = _certificate_trial if sc.kind == "certificate" else run_trial
    if sc.workers > 1:
        with ProcessPoolExecutor(max_workers=sc.workers) as ex:
            chunks = list(ex.map(fn, [sc] * len(idx), idx))
    else:
        chunks = [fn(sc, t) for t in idx]
    if sc.kind == "certificate":
        return SweepResult(sc, chunks, _cert_aggregate(chunks), "certificate")
    records = [r for ch in chunks for r in ch]
    return SweepResult(sc, records, _aggregate(records))


def _csv_text(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def write_outputs(result: SweepResult, out_dir, fmt: str = "csv") -> dict:
    """Write trial and aggregate tables plus ``plotdata/`` series.

    Returns:
        Mapping from artifact name to path.
    """
    out = Path(out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    paths = {}
    cols = CERT_COLUMNS if result.kind == "certificate" else TRIAL_COLUMNS
    rows = result.trial_rows()
    agg_cols = list(result.aggregate[0].keys()) if result.aggregate else []
    if fmt == "json":
        p = out / "trials.json"
        p.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "rows": rows}, indent=1, default=_num))
        paths["trials"] = p
    else:
        p = out / "trials.csv"
        p.write_text(_csv_text(rows, cols))
        paths["trials"] = p
    p = out / "aggregate.csv"
    p.write_text(_csv_text(result.aggregate, agg_cols))
    paths["aggregate"] = p
    if result.kind == "recovery":
        series: dict = {}
        for r in result.aggregate:
            series.setdefault((r["method"], r["snr_db"]), []).append((r["srf"], r["mean_error"]))
        for (method, snr), pts in series.items():
            tag = "noiseless" if math.isinf(snr) else f"snr{snr:g}dB"
            p = out / "plotdata" / f"{method}_{tag}_error_vs_srf.csv"
            p.write_text("srf,mean_resolution_error\n" + "".join(f"{x!r},{y!r}\n" for x, y in sorted(pts)))
            paths[p.stem] = p
        by_srf: dict = {}
        for r in result.aggregate:
            by_srf.setdefault((r["method"], r["srf"]), []).append((r["snr_db"], r["mean_error"]))
        for (method, srf), pts in by_srf.items():
            finite = sorted((s, e) for s, e in pts if not math.isinf(s))
            if len(finite) > 1:
                p = out / "plotdata" / f"{method}_srf{srf:g}_error_vs_snr.csv"
                p.write_text("snr_db,mean_resolution_error\n" + "".join(f"{x!r},{y!r}\n" for x, y in finite))
                paths[p.stem] = p
    meta = {"schema_version": SCHEMA_VERSION, "scenario": scenario_to_dict(result.scenario),
            "kind": result.kind, "aggregate": result.aggregate}
    p = out / "summary.json"
    p.write_text(json.dumps(meta, indent=2, default=_num))
    paths["summary"] = p
    return paths


def _num(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    return str(o)


# --- config ----------------------------------------------------------------------

def _parse_float(v: str) -> float:
    v = v.strip().lower()
    if v in ("inf", "+inf", "noiseless", "infinity"):
        return math.inf
    return float(v)


def _parse_opt_int(v: str):
    return None if v.strip().lower() in ("", "none", "auto") else int(v)


def _parse_opt_float(v: str):
    return None if v.strip().lower() in ("", "none", "auto") else float(v)


def _parse_bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _tuple_of(conv):
    return lambda v: tuple(conv(x) for x in v.replace(";", ",").split(",") if x.strip())


_SCENARIO_SCHEMA = {
    "name": str, "kind": str, "ensemble": str, "N": int, "N_T": int, "N_R": int, "d": int,
    "M": _parse_opt_int, "S": int, "domain": str, "box": _parse_opt_float, "snap": str,
    "separation": str, "amplitudes": str, "srf": _tuple_of(float), "snr_db": _tuple_of(_parse_float),
    "trials": int, "seed": int, "methods": _tuple_of(str.strip), "eta_scale": float,
    "max_peaks": _parse_opt_int, "workers": int,
}


def _schema_of(cls) -> dict:
    conv = {int: int, float: float, bool: _parse_bool, str: str}
    out = {}
    for f in dataclasses.fields(cls):
        t = f.type if not isinstance(f.type, str) else f.type
        text = str(t)
        if "None" in text and "int" in text:
            out[f.name] = _parse_opt_int
        elif "None" in text and "float" in text:
            out[f.name] = _parse_opt_float
        elif text in ("int",):
            out[f.name] = int
        elif text in ("float",):
            out[f.name] = float
        elif text in ("bool",):
            out[f.name] = _parse_bool
        else:
            out[f.name] = conv.get(t, str)
    return out


def _section(cp: configparser.ConfigParser, name: str, schema: dict, where: str) -> dict:
    if not cp.has_section(name):
        return {}
    vals = {}
    for key, raw in cp.items(name):
        if key not in schema:
            match = [k for k in schema if k.lower() == key]
            if not match:
                raise ConfigError(f"{where}: unknown key [{name}] {key}")
            key = match[0]
        try:
            vals[key] = schema[key](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: bad value for [{name}] {key} = {raw!r}: {exc}") from None
    return vals


def scenario_from_text(text: str, where: str = "<config>", base: Scenario | None = None) -> Scenario:
    """Parse an INI-style config with ``[scenario]``, ``[solver]`` and ``[iaa]`` sections.

    A ``preset`` key in ``[scenario]`` starts from that preset; other keys
    override it.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=where)
    except configparser.Error as exc:
        raise ConfigError(f"{where}: {exc}") from None
    extra = set(cp.sections()) - {"scenario", "solver", "iaa"}
    if extra:
        raise ConfigError(f"{where}: unknown sections {sorted(extra)}")
    start = base or Scenario()
    if cp.has_option("scenario", "preset"):
        start = preset(cp.get("scenario", "preset"))
        cp.remove_option("scenario", "preset")
    sc_vals = _section(cp, "scenario", _SCENARIO_SCHEMA, where)
    solver_vals = _section(cp, "solver", _schema_of(SolverConfig), where)
    iaa_vals = _section(cp, "iaa", _schema_of(IaaConfig), where)
    try:
        solver = dataclasses.replace(start.solver, **solver_vals)
        iaa = dataclasses.replace(start.iaa, **iaa_vals)
        return dataclasses.replace(start, solver=solver, iaa=iaa, **sc_vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path) -> Scenario:
    """Read a config file.

    Raises:
        ConfigError: Missing file or invalid content; the message names the path.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return scenario_from_text(p.read_text(), str(p))


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "none"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def scenario_to_dict(sc: Scenario) -> dict:
    d = {f.name: getattr(sc, f.name) for f in dataclasses.fields(sc) if f.name not in ("solver", "iaa")}
    d = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
    d["solver"] = dataclasses.asdict(sc.solver)
    d["iaa"] = dataclasses.asdict(sc.iaa)
    return d


def scenario_to_text(sc: Scenario) -> str:
    """Inverse of :func:`scenario_from_text`."""
    lines = ["[scenario]"]
    for f in dataclasses.fields(sc):
        if f.name not in ("solver", "iaa"):
            lines.append(f"{f.name} = {_fmt(getattr(sc, f.name))}")
    for sec, obj in (("solver", sc.solver), ("iaa", sc.iaa)):
        lines.append("")
        lines.append(f"[{sec}]")
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


# --- presets -------------------------------------------------------------------

_FIG2 = dict(ensemble="mimo", N=20, N_T=3, N_R=3, S=5, domain="box", methods=("l1_err",))

PRESETS: dict[str, Scenario] = {
    "fig2-mini": Scenario(name="fig2-mini", srf=(1.0, 2.0, 3.0), snr_db=(math.inf, 20.0), trials=10, **_FIG2),
    "fig2-full": Scenario(name="fig2-full", srf=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
                          snr_db=(math.inf, 5.0, 10.0, 20.0), trials=100, **_FIG2),
    "fig3": Scenario(name="fig3", ensemble="mimo", N=20, N_T=3, N_R=3, S=5, domain="fig3", srf=(3.0,),
                     snr_db=(0.0, 5.0, 10.0, 15.0, 20.0), trials=100, methods=("l1_err", "iaa")),
    "gauss-thm2": Scenario(name="gauss-thm2", ensemble="gaussian", N=64, d=1, S=4,
                           M=math.ceil(8 * 4 * math.log(129)), domain="unit", snap="grid",
                           separation="max", srf=(2.0,), snr_db=(math.inf,), trials=50, methods=("l1",)),
    "certify-3d": Scenario(name="certify-3d", kind="certificate", ensemble="subsampled", N=16, d=3, S=5,
                           domain="unit", separation="max", trials=100),
}


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
