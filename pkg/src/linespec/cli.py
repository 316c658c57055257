"""Command-line interface: ``linespec <command> [options]``.

Exit codes: 0 on success, 2 on configuration errors, 3 when a solver did not
converge (or a certificate failed) and ``--strict`` was given.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certifier import (CertificateProblem, GridTooCoarseError, SeparationError, SingularSystemError,
                        build_certificate, certify_sup_bound, near_region_check)
from .experiments import (ConfigError, Scenario, add_noise, base_grid, generate_scene, load_config,
                          make_operator, preset, resolution_error, run_sweep, scenario_to_text,
                          trial_seed, write_outputs)
from .gridlab import GridDictionary, GridSpec, default_eta, solve_l1_equality, solve_l1_err
from .iaa import iaa_solve
from .sensing import empirical_coherence, load_operator, save_operator
from .spectral import random_signs

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
log = logging.getLogger("linespec")


def _scenario(args) -> Scenario:
    if getattr(args, "config", None):
        sc = load_config(args.config)
    elif getattr(args, "preset", None):
        sc = preset(args.preset)
    else:
        sc = preset("fig2-mini")
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        over["trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    if getattr(args, "srf", None) is not None:
        over["srf"] = (float(args.srf),)
    if getattr(args, "snr", None) is not None:
        over["snr_db"] = (math.inf if args.snr.lower() in ("inf", "noiseless") else float(args.snr),)
    return sc.replace(**over) if over else sc


def _emit(obj: dict, args, name: str) -> None:
    text = json.dumps(obj, indent=2, default=_jsonable)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text + "\n")
    print(text)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def _cplx(a) -> list:
    return [[float(z.real), float(z.imag)] for z in np.ravel(a)]


def _instance(sc: Scenario, trial: int):
    seed = trial_seed(sc.seed, trial)
    op = make_operator(sc, seed)
    scene = generate_scene(sc, seed)
    y0 = op.atoms(scene.locations) @ scene.amplitudes
    y, n = add_noise(y0, sc.snr_db[0], seed)
    return seed, op, scene, y, n


# --- commands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = _scenario(args)
    seed, op, scene, y, n = _instance(sc, args.trial)
    out = Path(args.out_dir or ".")
    save_operator(op, out / "operator", dtype="complex128")
    (out / "scenario.ini").write_text(scenario_to_text(sc))
    obj = {"schema_version": 1, "trial": args.trial, "seed": seed, "snr_db": _jsonable_snr(sc.snr_db[0]),
           "locations": scene.locations.tolist(), "amplitudes": _cplx(scene.amplitudes),
           "y": _cplx(y), "noise_norm2": float(np.vdot(n, n).real)}
    args.out_dir = str(out)
    _emit(obj, args, "scene")
    return EXIT_OK


def _jsonable_snr(s: float):
    return "inf" if math.isinf(s) else s


def _load_instance(args, sc: Scenario):
    if args.input:
        d = Path(args.input)
        op = load_operator(d / "operator")
        scene = json.loads((d / "scene.json").read_text())
        y = np.array([complex(a, b) for a, b in scene["y"]])
        locs = np.array(scene["locations"])
        return op, locs, y, scene["noise_norm2"]
    _, op, scn, y, n = _instance(sc, args.trial)
    return op, scn.locations, y, float(np.vdot(n, n).real)


def cmd_recover(args) -> int:
    sc = _scenario(args)
    op, truth, y, noise2 = _load_instance(args, sc)
    spec = GridSpec.from_srf(sc.srf[0], base_grid(sc))
    dic = GridDictionary(op, spec)
    cfg = dataclasses.replace(sc.solver, max_peaks=sc.max_peaks or sc.S)
    if noise2 == 0.0 or args.method == "l1":
        sol = solve_l1_equality(dic, y, cfg)
    else:
        sol = solve_l1_err(dic, y, sc.eta_scale * default_eta(dic.M, noise2 / dic.M), cfg)
    obj = json.loads(sol.to_json())
    obj["resolution_error"] = resolution_error(truth, sol.locations, base_grid(sc))
    _emit(obj, args, "solution")
    if args.strict and not sol.converged:
        print("solver did not converge", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_baseline(args) -> int:
    sc = _scenario(args)
    op, truth, y, _ = _load_instance(args, sc)
    dic = GridDictionary(op, GridSpec.from_srf(sc.srf[0], base_grid(sc)))
    res = iaa_solve(dic, y, dataclasses.replace(sc.iaa, max_peaks=sc.max_peaks or sc.S))
    obj = json.loads(res.to_json())
    obj["resolution_error"] = resolution_error(truth, res.locations, base_grid(sc))
    _emit(obj, args, "iaa")
    return EXIT_OK


def _parse_support(text: str, d: int) -> np.ndarray:
    if d == 1:
        return np.array([float(v) for v in text.split(",") if v.strip()]).reshape(-1, 1)
    pts = [[float(v) for v in p.split(",")] for p in text.split(";") if p.strip()]
    arr = np.array(pts, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ConfigError(f"support must list points of dimension {d} separated by ';'")
    return arr


def cmd_certify(args) -> int:
    try:
        T = _parse_support(args.support, args.dim)
    except ValueError as exc:
        raise ConfigError(f"bad --support: {exc}") from None
    S = T.shape[0]
    if args.signs:
        u = np.exp(2j * np.pi * np.array([float(v) for v in args.signs.split(",")]))
    else:
        u = random_signs(S, args.seed if args.seed is not None else 0)
    op = None
    if args.mode == "random":
        sc = Scenario(ensemble=args.ensemble, N=args.N, d=args.dim, M=args.M, S=S, kind="certificate")
        op = make_operator(sc, args.seed or 0)
    try:
        prob = CertificateProblem(T, u, args.N, mode=args.mode, operator=op)
        cert = build_certificate(prob)
        bound = certify_sup_bound(cert, grid_density=args.grid)
    except (SeparationError, GridTooCoarseError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    except SingularSystemError as exc:
        print(f"certificate system is singular: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    near = [dataclasses.asdict(near_region_check(cert, k, n_points=args.near_points)) for k in range(S)]
    obj = cert.to_dict()
    obj["certified"] = bound.to_dict()
    obj["near_region"] = near
    _emit(obj, args, "certificate")
    if args.strict and not bound.passed:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    res = run_sweep(sc)
    out = Path(args.out_dir or f"sweep-{sc.name}")
    paths = write_outputs(res, out, args.format)
    print(json.dumps({"out_dir": str(out), "files": {k: str(v) for k, v in paths.items()},
                      "aggregate": res.aggregate}, indent=2, default=_jsonable))
    if args.strict and sc.kind == "recovery" and not all(r.converged for r in res.records):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_diagnose(args) -> int:
    sc = Scenario(ensemble=args.ensemble, N=args.N, N_T=args.N_T, N_R=args.N_R, d=args.dim, M=args.M)
    seed = args.seed if args.seed is not None else 0
    op = make_operator(sc, seed)
    rep = empirical_coherence(op, isotropy=not args.no_isotropy)
    obj = {"schema_version": 1, "ensemble": op.ensemble, "M": op.M, "n": op.n, "seed": seed,
           **dataclasses.asdict(rep)}
    _emit(obj, args, "diagnose")
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linespec", description="Line spectral estimation experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(q, scenario=True):
        q.add_argument("--out-dir", default=None)
        q.add_argument("--format", choices=("csv", "json"), default="csv")
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--strict", action="store_true", help="exit 3 on non-convergence")
        if scenario:
            q.add_argument("--config", default=None, help="INI config file")
            q.add_argument("--preset", default=None)
            q.add_argument("--srf", default=None)
            q.add_argument("--snr", default=None, help="SNR in dB or 'inf'")

    q = sub.add_parser("simulate", help="draw a scene and its measurements")
    common(q)
    q.add_argument("--trial", type=int, default=0)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("recover", help="solve one instance with L1 or L1-ERR")
    common(q)
    q.add_argument("--trial", type=int, default=0)
    q.add_argument("--input", default=None, help="directory written by 'simulate'")
    q.add_argument("--method", choices=("l1", "l1_err"), default="l1_err")
    q.set_defaults(func=cmd_recover)

    q = sub.add_parser("baseline", help="run IAA on one instance")
    common(q)
    q.add_argument("--trial", type=int, default=0)
    q.add_argument("--input", default=None)
    q.set_defaults(func=cmd_baseline)

    q = sub.add_parser("certify", help="build and verify a dual certificate")
    common(q, scenario=False)
    q.add_argument("--dim", type=int, default=1)
    q.add_argument("--N", type=int, required=True)
    q.add_argument("--support", required=True, help="1D: 0.1,0.3; dD: x,y,z;x,y,z")
    q.add_argument("--signs", default=None, help="phases in turns, comma separated")
    q.add_argument("--mode", choices=("deterministic", "random"), default="deterministic")
    q.add_argument("--ensemble", default="gaussian")
    q.add_argument("--M", type=int, default=None)
    q.add_argument("--grid", type=int, default=None, help="grid points per axis")
    q.add_argument("--near-points", type=int, default=100)
    q.set_defaults(func=cmd_certify)

    q = sub.add_parser("sweep", help="Monte Carlo sweep over SRF and SNR")
    common(q)
    q.add_argument("--trials", type=int, default=None)
    q.add_argument("--workers", type=int, default=None)
    q.set_defaults(func=cmd_sweep)

    q = sub.add_parser("diagnose", help="coherence and isotropy report")
    common(q, scenario=False)
    q.add_argument("--ensemble", default="subsampled")
    q.add_argument("--N", type=int, default=16)
    q.add_argument("--N-T", dest="N_T", type=int, default=3)
    q.add_argument("--N-R", dest="N_R", type=int, default=3)
    q.add_argument("--dim", type=int, default=1)
    q.add_argument("--M", type=int, default=None)
    q.add_argument("--no-isotropy", action="store_true")
    q.set_defaults(func=cmd_diagnose)
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli_main())
