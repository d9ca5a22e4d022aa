"""Sampling of psi on a regular grid over one fundamental domain, written as
CSV (analysis), JSON (provenance and round-trip) or ASCII PLY (viewers).

Rows are z-major: z varies slowest, then y, then x.  Floats are written with
``repr`` so that output is byte-identical across runs and parses back to the
same doubles.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidParameterError, UnclosedTorusWarning
from .immersion import ImmersionData, XYPeriods, eval_psi, xy_periods
from .phases import rationalize_winding

FORMATS = ("csv", "json", "ply")
CSV_COLUMNS = ["x", "y", "z"] + [f"{part}_psi{j}" for j in range(1, 5) for part in ("re", "im")] + ["u", "theta"]
PLY_PROJECTION = ("Re(psi1 conj psi4)", "Im(psi1 conj psi4)", "Re(psi2 conj psi3)")


@dataclass(frozen=True)
class SampleDomain:
    T_x: float
    T_y: float
    n_periods: int
    tau: float
    warnings: Tuple[str, ...] = ()

    @property
    def provisional(self):
        return bool(self.warnings)

    def to_dict(self):
        return {"T_x": self.T_x, "T_y": self.T_y, "n_periods": self.n_periods, "tau": self.tau,
                "Z": self.n_periods * self.tau, "provisional": self.provisional,
                "warnings": list(self.warnings)}


def sample_domain(d: ImmersionData, max_denominator: int = 64, eps_close: float = 1e-9,
                  n_periods: Optional[int] = None) -> SampleDomain:
    """[0, T_x) x [0, T_y) x [0, n tau), falling back to 2 pi and n = 1 (with a
    warning) when the lattice or the z-closure is not certified."""
    notes = []
    lattice = xy_periods(d.spectral)
    if lattice is None:
        notes.append("roots not all rational: x/y periods provisional (2 pi)")
        T_x = T_y = 2 * math.pi
    else:
        T_x, T_y = lattice.T_x, lattice.T_y
    if n_periods is None:
        closing = rationalize_winding(d.phases.theta_rel, max_denominator, eps_close)
        if closing is None:
            notes.append(f"relative winding not rational within denominator {max_denominator}: "
                         "z-extent provisional (one period)")
            n_periods = 1
        else:
            n_periods = closing[0]
    for msg in notes:
        warnings.warn(msg, UnclosedTorusWarning, stacklevel=3)
    return SampleDomain(T_x, T_y, int(n_periods), d.tau, tuple(notes))


def sample_grid(d: ImmersionData, grid, domain: SampleDomain):
    """Points (N, 3) in z-major order and psi (N, 4) at them."""
    nx, ny, nz = (int(n) for n in grid)
    if min(nx, ny, nz) < 1:
        raise InvalidParameterError(f"grid sizes must be >= 1, got {grid}")
    xs = domain.T_x * np.arange(nx) / nx
    ys = domain.T_y * np.arange(ny) / ny
    zs = domain.n_periods * domain.tau * np.arange(nz) / nz
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    psi = eval_psi(d, pts[:, 0], pts[:, 1], pts[:, 2])
    return pts, psi


def _fmt(v) -> str:
    return repr(float(v))


def bundle_hash(d: ImmersionData) -> str:
    payload = json.dumps(d.to_dict(), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def render_csv(d: ImmersionData, pts, psi) -> str:
    u, _, _ = d.profile.evaluate(pts[:, 2])
    theta = d.theta(pts[:, 0], pts[:, 1])
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for k in range(len(pts)):
        vals = list(pts[k])
        for j in range(4):
            vals.extend((psi[k, j].real, psi[k, j].imag))
        vals.extend((u[k], theta[k]))
        buf.write(",".join(_fmt(v) for v in vals) + "\n")
    return buf.getvalue()


def gauge_invariant_projection(psi):
    """A map CP^3 -> R^3 built from Hermitian bilinears (phase-independent)."""
    a = psi[:, 0] * np.conj(psi[:, 3])
    b = psi[:, 1] * np.conj(psi[:, 2])
    return np.column_stack([a.real, a.imag, b.real])


def render_ply(d: ImmersionData, pts, psi, domain: SampleDomain) -> str:
    xyz = gauge_invariant_projection(psi)
    lines = ["ply", "format ascii 1.0",
             f"comment projection x={PLY_PROJECTION[0]} y={PLY_PROJECTION[1]} z={PLY_PROJECTION[2]}",
             f"comment params {json.dumps(d.params.to_dict(), sort_keys=True)}",
             f"comment bundle_sha256 {bundle_hash(d)}"]
    lines += [f"comment warning {w}" for w in domain.warnings]
    lines += [f"element vertex {len(xyz)}", "property double x", "property double y",
              "property double z", "end_header"]
    lines += [" ".join(_fmt(v) for v in row) for row in xyz]
    return "\n".join(lines) + "\n"


def render_json(d: ImmersionData, pts, psi, domain: SampleDomain, grid) -> str:
    doc = {
        "format": "hml_tori.samples/1",
        "provenance": {"bundle_sha256": bundle_hash(d), "params": d.params.to_dict()},
        "domain": domain.to_dict(),
        "grid": [int(n) for n in grid],
        "order": "z-major",
        "bundle": d.to_dict(),
        "samples": [[float(x), float(y), float(z)] + [float(c) for v in row for c in (v.real, v.imag)]
                    for (x, y, z), row in zip(pts, psi)],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def export_samples(d: ImmersionData, grid=(8, 8, 8), fmt: str = "csv", path=None,
                   max_denominator: int = 64, eps_close: float = 1e-9,
                   n_periods: Optional[int] = None) -> str:
    """Render samples in ``fmt``; write them to ``path`` when given.  Returns the text."""
    if fmt not in FORMATS:
        raise InvalidParameterError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    domain = sample_domain(d, max_denominator, eps_close, n_periods)
    pts, psi = sample_grid(d, grid, domain)
    if fmt == "csv":
        text = render_csv(d, pts, psi)
    elif fmt == "ply":
        text = render_ply(d, pts, psi, domain)
    else:
        text = render_json(d, pts, psi, domain, grid)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def load_bundle(source) -> ImmersionData:
    """ImmersionData from a JSON sample export or a bare bundle (path or parsed dict)."""
    if not isinstance(source, dict):
        with open(source, encoding="utf-8") as fh:
            source = json.load(fh)
    return ImmersionData.from_dict(source.get("bundle", source))
