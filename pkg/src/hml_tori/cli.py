"""Command line: ``hml-tori {derive,profile,search,sample,verify,export}``.

Exit codes: 0 success, 1 certification failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import replace

import numpy as np

from .errors import HMLError, InvalidParameterError, NoOscillationError, UnclosedTorusWarning
from .export import FORMATS, export_samples
from .immersion import build_immersion, eval_psi, hopf_project, xy_periods
from .params import ModuliParams, derive_constants, number_to_json, parse_number, spectral_data
from .phases import rationalize_winding, windings
from .profile import energy_residual, find_turning_points, oscillation_exists, solve_profile
from .search import SearchConfig, search_tori
from .verify import DEFAULT_TOLERANCES, CertificationConfig, run_certification

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2

SCHEMA_HELP = """\
config file (JSON), every section optional:
  params:        {a, b, c1, c2, c3}  numbers, "p/q" strings or {num, den}
  profile:       {n_samples: int >= 64, rtol: float}
  certification: {seed, n_points, n_reduced, n_connection, h, fd_order, richardson,
                  x_range, z_periods, closure_n, tolerances: {name: float}}
  search:        {grids: {a|b|c1|c2|c3: {min, max, denominator}}, alpha_targets: [...],
                  winding_targets: [...], max_denominator, eps_close, periodicity_tol,
                  n_samples, n_check_points, seed, workers}
  export:        {grid: [nx, ny, nz], format: csv|json|ply, max_denominator, eps_close, n_periods}
"""


class UsageError(Exception):
    pass


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def _params(args, cfg) -> ModuliParams:
    raw = dict(cfg.get("params") or {})
    for key in ("a", "b", "c1", "c2", "c3"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    missing = [k for k in ("a", "b", "c1", "c2", "c3") if k not in raw]
    if missing:
        raise UsageError(f"missing parameters: {', '.join(missing)}")
    try:
        return ModuliParams(**{k: parse_number(raw[k]) for k in ("a", "b", "c1", "c2", "c3")})
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(str(exc))


def _profile_opts(args, cfg):
    prof = dict(cfg.get("profile") or {})
    n_samples = int(getattr(args, "n_samples", None) or prof.get("n_samples", 1024))
    rtol = args.tol_profile if args.tol_profile is not None else float(prof.get("rtol", 1e-12))
    return n_samples, rtol


def _tolerance_overrides(items):
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or name not in DEFAULT_TOLERANCES:
            raise UsageError(f"--tol-verify expects NAME=VALUE with NAME in {sorted(DEFAULT_TOLERANCES)}")
        out[name] = float(value)
    return out


def _emit(text, out=None):
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- subcommands ----------------------------------------------------------------------

def cmd_derive(args, cfg):
    p = _params(args, cfg)
    d = derive_constants(p)
    out = {"params": p.to_dict(),
           "derived": {"frakC": number_to_json(d.frakC), "frakB": number_to_json(d.frakB)},
           "frakC_positive": d.positive}
    if d.positive:
        out["oscillation_exists"] = oscillation_exists(float(d.frakC), float(p.c3))
        out["spectral"] = spectral_data(p, d).to_dict()
    _emit(_dumps(out), args.out)
    if not d.positive:
        print(f"error: C = {d.frakC} is not positive; no periodic profile exists", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_profile(args, cfg):
    n_samples, rtol = _profile_opts(args, cfg)
    if args.frakC is not None or args.c3 is not None:
        if args.frakC is None or args.c3 is None:
            raise UsageError("profile needs both --frakC and --c3 (or a params section)")
        frakC, c3 = float(parse_number(args.frakC)), float(parse_number(args.c3))
    else:
        p = _params(args, cfg)
        frakC, c3 = float(derive_constants(p).require_positive().frakC), float(p.c3)
    if frakC <= 0:
        raise InvalidParameterError(f"C must be positive, got {frakC!r}")
    t = find_turning_points(frakC, c3)
    sol = solve_profile(frakC, c3, n_samples=n_samples, rtol=rtol)
    ph = windings(sol)
    summary = {
        "frakC": frakC, "c3": c3, "s_min": t.s_min, "s_max": t.s_max, "tau": sol.tau,
        "windings": ph.to_dict(), "closing_ratio": ph.closing_ratio,
        "energy_residual_10_periods": energy_residual(sol, np.linspace(0, 10 * sol.tau, 4001)),
    }
    if args.out:
        _emit(_dumps(sol.to_dict()), args.out)
    sys.stdout.write(_dumps(summary))
    return EXIT_OK


def cmd_search(args, cfg):
    raw = cfg.get("search")
    if not raw:
        raise UsageError("search needs a config with a 'search' section")
    if args.seed is not None:
        raw = {**raw, "seed": args.seed}
    if args.tol_verify:
        tol = _tolerance_overrides(args.tol_verify)
        if "periodicity" in tol:
            raw = {**raw, "periodicity_tol": tol["periodicity"]}
    scfg = SearchConfig.from_dict(raw)
    result = search_tori(scfg, workers=args.workers)
    doc = {"config": scfg.to_dict(), **result.to_dict()}
    if args.out:
        _emit(_dumps(doc), args.out)
    sys.stdout.write(_dumps({"stats": result.stats,
                             "candidates": [c.to_dict() for c in result.candidates]}))
    return EXIT_OK


def cmd_sample(args, cfg):
    p = _params(args, cfg)
    n_samples, rtol = _profile_opts(args, cfg)
    d = build_immersion(p, n_samples=n_samples, rtol=rtol)
    if args.x is not None or args.y is not None or args.z is not None:
        pts = np.array([[args.x or 0.0, args.y or 0.0, args.z or 0.0]])
    else:
        seed = args.seed if args.seed is not None else 0
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-1.0, 1.0, size=(args.points, 3)) * np.array([math.pi, math.pi, d.tau])
    psi = eval_psi(d, pts[:, 0], pts[:, 1], pts[:, 2])
    rows = []
    for pt, v in zip(pts, psi):
        rep = hopf_project(v).rep
        rows.append({"point": [float(c) for c in pt],
                     "psi": [[float(c.real), float(c.imag)] for c in v],
                     "cp3_rep": [[float(c.real), float(c.imag)] for c in rep]})
    _emit(_dumps({"params": p.to_dict(), "samples": rows}), args.out)
    return EXIT_OK


def cmd_verify(args, cfg):
    p = _params(args, cfg)
    n_samples, rtol = _profile_opts(args, cfg)
    ccfg = CertificationConfig.from_dict(cfg.get("certification"))
    if args.seed is not None:
        ccfg = replace(ccfg, seed=args.seed)
    tol = _tolerance_overrides(args.tol_verify)
    if tol:
        ccfg = replace(ccfg, tolerances={**ccfg.tolerances, **tol})
    d = build_immersion(p, n_samples=n_samples, rtol=rtol)
    if ccfg.closure_n is None and xy_periods(d.spectral) is not None:
        closing = rationalize_winding(d.phases.theta_rel, int(cfg.get("max_denominator", 64)))
        if closing is not None:
            ccfg = replace(ccfg, closure_n=closing[0])
    report = run_certification(d, ccfg)
    fmt = args.format or "text"
    text = report.to_json() + "\n" if fmt == "json" else report.to_text() + "\n"
    _emit(text, args.out)
    if args.out:
        sys.stdout.write(report.to_text() + "\n")
    return EXIT_OK if report.overall else EXIT_FAIL


def cmd_export(args, cfg):
    p = _params(args, cfg)
    n_samples, rtol = _profile_opts(args, cfg)
    ex = dict(cfg.get("export") or {})
    grid = args.grid or ex.get("grid", [8, 8, 8])
    if len(grid) != 3:
        raise UsageError("--grid needs three integers")
    fmt = args.format or ex.get("format", "csv")
    if fmt not in FORMATS:
        raise UsageError(f"--format must be one of {FORMATS} for export")
    d = build_immersion(p, n_samples=n_samples, rtol=rtol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnclosedTorusWarning)  # recorded in the output instead
        text = export_samples(d, grid, fmt, max_denominator=int(ex.get("max_denominator", 64)),
                              eps_close=float(ex.get("eps_close", 1e-9)),
                              n_periods=ex.get("n_periods"))
    _emit(text, args.out)
    return EXIT_OK


COMMANDS = {"derive": cmd_derive, "profile": cmd_profile, "search": cmd_search,
            "sample": cmd_sample, "verify": cmd_verify, "export": cmd_export}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (see 'hml-tori --help')")
    common.add_argument("--seed", type=int, help="random seed for sample points")
    common.add_argument("--tol-profile", type=float, help="profile integrator relative tolerance")
    common.add_argument("--tol-verify", action="append", metavar="NAME=VALUE",
                        help="override one certification tolerance (repeatable)")
    common.add_argument("--out", help="write the main output to this path")
    common.add_argument("--format", choices=("text", "json", "csv", "ply"), help="output format")
    for key in ("a", "b", "c1", "c2", "c3"):
        common.add_argument(f"--{key}", help=f"modulus {key} (number or p/q)")
    common.add_argument("--n-samples", type=int, help="profile samples per period")

    parser = argparse.ArgumentParser(
        prog="hml-tori",
        description="Conformally flat H-minimal Lagrangian tori in CP^3.",
        epilog=SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("derive", parents=[common], help="derived constants and spectral data")
    sp = sub.add_parser("profile", parents=[common], help="solve the profile ODE")
    sp.add_argument("--frakC", help="the constant C directly (with --c3)")
    ss = sub.add_parser("search", parents=[common], help="scan a rational grid for closed tori")
    ss.add_argument("--workers", type=int, help="worker processes (HML_TORI_THREADS overrides)")
    sa = sub.add_parser("sample", parents=[common], help="evaluate psi at points")
    sa.add_argument("--x", type=float)
    sa.add_argument("--y", type=float)
    sa.add_argument("--z", type=float)
    sa.add_argument("--points", type=int, default=8, help="number of random points")
    sub.add_parser("verify", parents=[common], help="run the certification suite")
    se = sub.add_parser("export", parents=[common], help="export a sample grid")
    se.add_argument("--grid", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}\n\n{SCHEMA_HELP}", file=sys.stderr)
        return EXIT_INVALID
    except (HMLError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
