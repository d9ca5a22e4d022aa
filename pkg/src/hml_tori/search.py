"""Torus search over rational moduli grids.

Every grid point runs the same pipeline with an early exit at the cheapest
failing condition:

    C > 0 -> oscillation -> three rational roots -> gamma radicands
          -> winding rationalization -> behavioral periodicity check

Points with three rational roots are measure-zero in a blind grid, so the
b-axis can instead be *targeted*: for a requested rational root alpha*, the
cubic alpha^3 + a alpha^2 - B alpha + c1 C = 0 is linear in r = c2 b
(B = B0 + r, C = C0 + r with B0 = 2 c1 a + 3 c1^2 + 3 c2^2,
C0 = a c1 + 2 c1^2 + 2 c2^2), giving

    r = (alpha*^3 + a alpha*^2 - B0 alpha* + c1 C0) / (alpha* - c1).

The relative winding Theta_rel / 2 pi depends on c3 only (for fixed C), so the
c3-axis can likewise be replaced by a list of rational winding targets m/n;
c3 is then solved for numerically and is not itself rational.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ComplexRootsError,
    DegenerateRootError,
    HMLError,
    IdentityViolationError,
    InvalidParameterError,
    MultipleRootError,
    NegativeRadicandError,
    NoOscillationError,
    QuadratureNonConvergence,
)
from .immersion import XYPeriods, build_immersion, xy_periods
from .params import (
    ModuliParams,
    compute_betas,
    compute_gammas,
    derive_constants,
    number_to_json,
    parse_number,
    solve_spectral_cubic,
)
from .phases import rationalize_winding, winding_integrals
from .profile import oscillation_exists
from .verify import DEFAULT_TOLERANCES, certify_periodicity

STAGES = ("params", "frakC", "oscillation", "rational_roots", "gamma_radicands",
          "winding", "certification", "accepted")
THREADS_ENV = "HML_TORI_THREADS"


@dataclass(frozen=True)
class GridSpec:
    """All k / denominator with min <= k / denominator <= max."""

    min: Fraction
    max: Fraction
    denominator: int = 1

    def __post_init__(self):
        if int(self.denominator) < 1:
            raise InvalidParameterError("grid denominator must be >= 1")
        if self.min > self.max:
            raise InvalidParameterError(f"empty grid: min {self.min} > max {self.max}")

    def values(self) -> List[Fraction]:
        q = int(self.denominator)
        lo = math.ceil(self.min * q)
        hi = math.floor(self.max * q)
        return [Fraction(k, q) for k in range(lo, hi + 1)]

    def to_dict(self):
        return {"min": number_to_json(self.min), "max": number_to_json(self.max),
                "denominator": int(self.denominator)}

    @classmethod
    def from_dict(cls, data):
        if isinstance(data, (list, tuple)):
            data = dict(zip(("min", "max", "denominator"), data))
        lo, hi = parse_number(data["min"]), parse_number(data["max"])
        return cls(Fraction(lo), Fraction(hi), int(data.get("denominator", 1)))


def _fractions(values) -> Tuple[Fraction, ...]:
    return tuple(Fraction(parse_number(v)) for v in values)


@dataclass(frozen=True)
class SearchConfig:
    grids: dict
    alpha_targets: Optional[Tuple[Fraction, ...]] = None
    winding_targets: Optional[Tuple[Fraction, ...]] = None
    max_denominator: int = 64
    eps_close: float = 1e-9
    periodicity_tol: float = DEFAULT_TOLERANCES["periodicity"]
    n_samples: int = 1024
    n_check_points: int = 64
    seed: int = 0
    workers: Optional[int] = None

    def __post_init__(self):
        needed = {"a", "c1", "c2"}
        if self.alpha_targets is None:
            needed.add("b")
        if self.winding_targets is None:
            needed.add("c3")
        missing = needed - set(self.grids)
        if missing:
            raise InvalidParameterError(f"search grid missing axes: {sorted(missing)}")
        if self.max_denominator < 1:
            raise InvalidParameterError("max_denominator must be >= 1")
        if self.alpha_targets is not None and len(self.alpha_targets) == 0:
            raise InvalidParameterError("alpha_targets is empty")
        if self.winding_targets is not None:
            if len(self.winding_targets) == 0:
                raise InvalidParameterError("winding_targets is empty")
            for t in self.winding_targets:
                if t.denominator > self.max_denominator:
                    raise InvalidParameterError(
                        f"winding target {t} has denominator above max_denominator")
        for name, g in self.grids.items():
            if name in needed and not g.values():
                raise InvalidParameterError(f"grid for {name} contains no points")

    def to_dict(self):
        out = {
            "grids": {k: g.to_dict() for k, g in sorted(self.grids.items())},
            "max_denominator": self.max_denominator,
            "eps_close": self.eps_close,
            "periodicity_tol": self.periodicity_tol,
            "n_samples": self.n_samples,
            "n_check_points": self.n_check_points,
            "seed": self.seed,
        }
        if self.alpha_targets is not None:
            out["alpha_targets"] = [number_to_json(t) for t in self.alpha_targets]
        if self.winding_targets is not None:
            out["winding_targets"] = [number_to_json(t) for t in self.winding_targets]
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or not data.get("grids"):
            raise InvalidParameterError("search config needs a non-empty 'grids' object")
        grids = {k: GridSpec.from_dict(v) for k, v in data["grids"].items()}
        kw = {}
        for key in ("max_denominator", "n_samples", "n_check_points", "seed", "workers"):
            if data.get(key) is not None:
                kw[key] = int(data[key])
        for key in ("eps_close", "periodicity_tol"):
            if data.get(key) is not None:
                kw[key] = float(data[key])
        for key in ("alpha_targets", "winding_targets"):
            if data.get(key) is not None:
                kw[key] = _fractions(data[key])
        return cls(grids=grids, **kw)


@dataclass(frozen=True)
class PointOutcome:
    """Where one grid point left the pipeline (``stage == 'accepted'`` for candidates)."""

    index: int
    params: Optional[dict]
    stage: str
    message: str = ""


@dataclass(frozen=True)
class TorusCandidate:
    params: ModuliParams
    roots: Tuple[Fraction, Fraction, Fraction]
    tau: float
    theta_rel: float
    n: int
    m: int
    periods: XYPeriods
    periodicity_residual: float
    verdict: str

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "roots": [number_to_json(r) for r in self.roots],
            "tau": self.tau,
            "theta_rel": self.theta_rel,
            "closing": {"n": self.n, "m": self.m},
            "periods": {"kx": number_to_json(self.periods.kx), "ky": number_to_json(self.periods.ky)},
            "periodicity_residual": self.periodicity_residual,
            "verdict": self.verdict,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            params=ModuliParams.from_dict(data["params"]),
            roots=tuple(Fraction(parse_number(r)) for r in data["roots"]),
            tau=float(data["tau"]),
            theta_rel=float(data["theta_rel"]),
            n=int(data["closing"]["n"]),
            m=int(data["closing"]["m"]),
            periods=XYPeriods(Fraction(parse_number(data["periods"]["kx"])),
                              Fraction(parse_number(data["periods"]["ky"]))),
            periodicity_residual=float(data["periodicity_residual"]),
            verdict=str(data["verdict"]),
        )


@dataclass
class SearchResult:
    candidates: List[TorusCandidate]
    outcomes: List[PointOutcome]
    stats: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "candidates": [c.to_dict() for c in self.candidates],
            "stats": self.stats,
            "rejections": [
                {"index": o.index, "params": o.params, "stage": o.stage, "message": o.message}
                for o in self.outcomes if o.stage != "accepted"
            ],
        }


# -- grid enumeration ---------------------------------------------------------------

def target_b(a, c1, c2, alpha) -> Optional[Fraction]:
    """The b for which alpha is a root of the spectral cubic (None if alpha = c1)."""
    a, c1, c2, alpha = (Fraction(v) for v in (a, c1, c2, alpha))
    if alpha == c1 or c2 == 0:
        return None
    B0 = 2 * c1 * a + 3 * c1 ** 2 + 3 * c2 ** 2
    C0 = a * c1 + 2 * c1 ** 2 + 2 * c2 ** 2
    r = (alpha ** 3 + a * alpha ** 2 - B0 * alpha + c1 * C0) / (alpha - c1)
    return r / c2


def enumerate_points(cfg: SearchConfig) -> List[Tuple]:
    """Deterministic, duplicate-free list of (a, b, c1, c2, c3-or-target) tuples.

    The last entry is a Fraction c3 in grid mode and ("winding", m/n) in
    winding-target mode.
    """
    a_vals = cfg.grids["a"].values()
    c1_vals = cfg.grids["c1"].values()
    c2_vals = cfg.grids["c2"].values()
    if cfg.winding_targets is None:
        last = cfg.grids["c3"].values()
    else:
        last = [("winding", t) for t in cfg.winding_targets]

    seen = set()
    out = []
    if cfg.alpha_targets is None:
        b_vals = cfg.grids["b"].values()
        iterator = ((a, b, c1, c2, w) for a, b, c1, c2, w in product(a_vals, b_vals, c1_vals, c2_vals, last))
    else:
        def gen():
            for a, c1, c2, alpha in product(a_vals, c1_vals, c2_vals, cfg.alpha_targets):
                b = target_b(a, c1, c2, alpha)
                if b is None:
                    continue
                for w in last:
                    yield a, b, c1, c2, w
        iterator = gen()
    for pt in iterator:
        if pt not in seen:
            seen.add(pt)
            out.append(pt)
    return out


# -- winding-target solve -----------------------------------------------------------

_C3_LO, _C3_HI = 1e-3, 1.0 - 1e-6


def c3_for_winding(frakC: float, ratio: float, tol: float = 1e-15) -> float:
    """Positive c3 with Theta_rel(C, c3) / 2 pi = ratio (brentq on c3 / c3_crit)."""
    frakC = float(frakC)
    crit = math.sqrt(27.0 * frakC ** 4 / 256.0)

    def f(t):
        return winding_integrals(frakC, t * crit).theta_rel / (2 * math.pi) - ratio

    lo, hi = f(_C3_LO), f(_C3_HI)
    if lo * hi > 0:
        raise NoOscillationError(
            f"winding ratio {ratio!r} outside the reachable range ({lo + ratio:.6f}, {hi + ratio:.6f})")
    t = brentq(f, _C3_LO, _C3_HI, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    return t * crit


# -- per-point pipeline -------------------------------------------------------------

def _check_points(lattice: XYPeriods, n: int, tau: float, count: int, seed: int):
    rng = np.random.default_rng(seed)
    u = rng.random((count, 3))
    return u * np.array([lattice.T_x, lattice.T_y, n * tau])


def evaluate_point(index: int, point: Tuple, cfg: SearchConfig):
    """Run the staged pipeline on one grid point; returns (PointOutcome, candidate or None)."""
    a, b, c1, c2, last = point
    target = last[1] if isinstance(last, tuple) else None
    c3 = Fraction(1) if target is not None else last
    try:
        params = ModuliParams(a, b, c1, c2, c3)
    except (InvalidParameterError, ValueError) as exc:
        return PointOutcome(index, None, "params", str(exc)), None
    label = params.to_dict()
    if target is not None:
        label["c3"] = {"winding_target": number_to_json(target)}

    def reject(stage, msg=""):
        return PointOutcome(index, label, stage, msg), None

    derived = derive_constants(params)
    if not derived.positive:
        return reject("frakC", f"C = {derived.frakC} <= 0")
    frakC = float(derived.frakC)
    if target is None and not oscillation_exists(frakC, float(c3)):
        return reject("oscillation", "c3 = 0 or c3^2 >= 27 C^4 / 256")

    try:
        spec = solve_spectral_cubic(params, derived)
    except (ComplexRootsError, MultipleRootError, DegenerateRootError) as exc:
        return reject("rational_roots", f"{type(exc).__name__}: {exc}")
    if not spec.all_rational:
        return reject("rational_roots", "not all roots rational")
    try:
        spec = compute_gammas(compute_betas(spec, params), derived)
    except (NegativeRadicandError, IdentityViolationError, DegenerateRootError) as exc:
        return reject("gamma_radicands", f"{type(exc).__name__}: {exc}")

    try:
        if target is not None:
            c3 = c3_for_winding(frakC, float(target))
            params = ModuliParams(a, b, c1, c2, c3)
            label = params.to_dict()
            label["winding_target"] = number_to_json(target)
        phases = winding_integrals(frakC, float(c3))
    except (NoOscillationError, MultipleRootError, QuadratureNonConvergence) as exc:
        return reject("winding", f"{type(exc).__name__}: {exc}")
    closing = rationalize_winding(phases.theta_rel, cfg.max_denominator, cfg.eps_close)
    if closing is None:
        return reject("winding", f"Theta_rel / 2pi = {phases.closing_ratio!r} not rational "
                                 f"within denominator {cfg.max_denominator}")
    n, m = closing

    try:
        d = build_immersion(params, n_samples=cfg.n_samples)
    except HMLError as exc:
        return reject("certification", f"{type(exc).__name__}: {exc}")
    lattice = xy_periods(d.spectral)
    pts = _check_points(lattice, n, d.tau, cfg.n_check_points, cfg.seed + index)
    rec = certify_periodicity(d, n, lattice, pts, cfg.periodicity_tol)
    if not rec.passed:
        return reject("certification", f"periodicity residual {rec.max_residual:.3e}")
    cand = TorusCandidate(
        params=params,
        roots=tuple(spec.rational_roots),
        tau=d.tau,
        theta_rel=phases.theta_rel,
        n=n,
        m=m,
        periods=lattice,
        periodicity_residual=rec.max_residual,
        verdict=rec.verdict,
    )
    return PointOutcome(index, label, "accepted"), cand


def _worker(job):
    index, point, cfg = job
    try:
        return evaluate_point(index, point, cfg)
    except Exception as exc:  # per-point errors never abort the sweep
        return PointOutcome(index, None, "error", f"{type(exc).__name__}: {exc}"), None


def resolve_workers(requested: Optional[int] = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"{THREADS_ENV} must be an integer, got {env!r}")
    if requested:
        return max(1, int(requested))
    return 1


def search_tori(cfg: SearchConfig, workers: Optional[int] = None) -> SearchResult:
    """Exhaustive scan of the configured grid, merged in grid order."""
    points = enumerate_points(cfg)
    jobs = [(i, pt, cfg) for i, pt in enumerate(points)]
    nworkers = resolve_workers(workers if workers is not None else cfg.workers)
    if nworkers == 1 or len(jobs) < 2:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(_worker, jobs, chunksize=max(1, len(jobs) // (4 * nworkers))))
    outcomes = [r[0] for r in results]
    candidates = [r[1] for r in results if r[1] is not None]
    counts = Counter(o.stage for o in outcomes)
    stats = {"points": len(points), "candidates": len(candidates),
             "rejected_at": {s: counts[s] for s in STAGES[:-1] + ("error",) if counts.get(s)}}
    return SearchResult(candidates, outcomes, stats)


def recertify(candidate: TorusCandidate, n_samples: int = 1024, n_points: int = 64, seed: int = 0,
              tol: float = DEFAULT_TOLERANCES["periodicity"]):
    """Rebuild a candidate from its parameters alone and re-run the closure check."""
    d = build_immersion(candidate.params, n_samples=n_samples)
    lattice = xy_periods(d.spectral)
    if lattice is None:
        raise InvalidParameterError("candidate no longer has rational roots")
    pts = _check_points(lattice, candidate.n, d.tau, n_points, seed)
    return certify_periodicity(d, candidate.n, lattice, pts, tol)
