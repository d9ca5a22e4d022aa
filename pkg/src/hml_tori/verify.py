"""Certification engine: every geometric claim becomes a residual with a verdict.

Finite differences use 4th-order central stencils for first derivatives and
the standard 2nd-order stencils for second derivatives unless configured
otherwise.  Failures are recorded, never raised.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .immersion import (
    ImmersionData,
    build_connection,
    eval_psi,
    frames_from_jet,
    fs_distance,
    psi_jet,
    theta_derivative,
    xy_periods,
)
from .profile import energy_residual, ode_return_period, quintic_residual, second_order_residual

DEFAULT_TOLERANCES = {
    "gamma_identities": 1e-12,
    "profile_energy": 1e-10,
    "profile_second_order": 1e-8,
    "period_consistency": 1e-8,
    "quintic_form": 1e-8,
    "norm": 1e-9,
    "horizontality": 1e-9,
    "orthogonality": 1e-9,
    "conformal_factor": 1e-9,
    "lagrangian_form": 1e-9,
    "frame_unitarity": 1e-9,
    "det_frame": 1e-10,
    "fd_derivatives": 1e-6,
    "harmonic_angle": 1e-12,
    "zero_curvature": 1e-8,
    "frame_transport": 1e-8,
    "reduced_system": 1e-6,
    "periodicity": 1e-6,
}


@dataclass(frozen=True)
class CheckRecord:
    name: str
    max_residual: float
    tolerance: float
    n_samples: int
    verdict: str
    detail: Optional[dict] = None

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        out = {k: v for k, v in asdict(self).items() if k != "detail"}
        if self.detail is not None:
            out["detail"] = self.detail
        return out


def make_record(name, residuals, tol, detail=None) -> CheckRecord:
    r = np.asarray(residuals, dtype=float).ravel()
    if r.size == 0:
        return CheckRecord(name, 0.0, tol, 0, "vacuous", detail)
    worst = float(np.max(r)) if not np.any(np.isnan(r)) else float("nan")
    verdict = "pass" if worst <= tol else "fail"
    return CheckRecord(name, worst, tol, int(r.size), verdict, detail)


@dataclass(frozen=True)
class CertificationReport:
    records: tuple
    provenance: str

    @property
    def overall(self) -> bool:
        return bool(self.records) and all(r.passed for r in self.records)

    def record(self, name) -> CheckRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "overall": "pass" if self.overall else "fail",
            "provenance": self.provenance,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"{'check':<22} {'max_residual':>13} {'tolerance':>10} {'n':>6}  verdict"]
        for r in self.records:
            lines.append(f"{r.name:<22} {r.max_residual:13.3e} {r.tolerance:10.1e} {r.n_samples:6d}  {r.verdict}")
        lines.append(f"overall: {'PASS' if self.overall else 'FAIL'}   provenance: {self.provenance[:16]}")
        return "\n".join(lines)


# -- finite differences ---------------------------------------------------------------

# The helpers below differentiate a batch function g(offset) of an (n, 3) offset
# array at offset = 0; callers close over the base points.  Keeping base and
# offset apart lets the evaluator add phases as base + increment, which avoids
# the cancellation of large phase arguments in the difference quotients.

def _offset(n, *moves):
    out = np.zeros((n, 3))
    for axis, delta in moves:
        out[:, axis] += delta
    return out


def fd_first(g, n, axis, h, order=4):
    """Central first derivative along ``axis`` (order 2 or 4)."""
    if order == 2:
        return (g(_offset(n, (axis, h))) - g(_offset(n, (axis, -h)))) / (2 * h)
    if order == 4:
        return (-g(_offset(n, (axis, 2 * h))) + 8 * g(_offset(n, (axis, h)))
                - 8 * g(_offset(n, (axis, -h))) + g(_offset(n, (axis, -2 * h)))) / (12 * h)
    raise ValueError("fd order must be 2 or 4")


def fd_first_richardson(g, n, axis, h, order=4):
    p = order
    coarse = fd_first(g, n, axis, h, order)
    fine = fd_first(g, n, axis, h / 2, order)
    return (2 ** p * fine - coarse) / (2 ** p - 1)


def fd_second(g, n, axis, h):
    return (g(_offset(n, (axis, h))) - 2 * g(_offset(n)) + g(_offset(n, (axis, -h)))) / (h * h)


def fd_mixed(g, n, ax1, ax2, h):
    pp = g(_offset(n, (ax1, h), (ax2, h)))
    pm = g(_offset(n, (ax1, h), (ax2, -h)))
    mp = g(_offset(n, (ax1, -h), (ax2, h)))
    mm = g(_offset(n, (ax1, -h), (ax2, -h)))
    return (pp - pm - mp + mm) / (4 * h * h)


def psi_near(d: ImmersionData, pts):
    """g(offset) = psi(pts + offset), for the finite-difference helpers."""
    x, y, z = _as_points(pts).T

    def g(offset):
        return eval_psi(d, x, y, z, offset)

    return g


def _herm(u, v):
    return np.sum(u * np.conj(v), axis=-1)


def _as_points(pts):
    pts = np.asarray(pts, dtype=float)
    return pts.reshape(-1, 3)


# -- pointwise ----------------------------------------------------------------------------

def certify_pointwise(d: ImmersionData, pts, h=1e-4, tolerances=None, fd_order=4,
                      richardson=False) -> list:
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    pts = _as_points(pts)
    names = ["norm", "horizontality", "orthogonality", "conformal_factor", "lagrangian_form",
             "frame_unitarity", "det_frame", "fd_derivatives"]
    if len(pts) == 0:
        return [make_record(n, [], tol[n]) for n in names]

    x, y, z = pts.T
    jet = psi_jet(d, x, y, z)
    e = np.exp(-jet.u)[:, None]
    rows = [jet.psi_x * e, jet.psi_y * e, jet.psi_z * e]
    raw = [jet.psi_x, jet.psi_y, jet.psi_z]
    e2 = np.exp(-2 * jet.u)

    res = {}
    res["norm"] = np.abs(np.linalg.norm(jet.psi, axis=-1) - 1.0)
    res["horizontality"] = np.max([np.abs(_herm(jet.psi, r)) for r in rows], axis=0)
    pairs = [(0, 1), (1, 2), (2, 0)]
    res["orthogonality"] = np.max([np.abs(_herm(rows[i], rows[j])) for i, j in pairs], axis=0)
    res["conformal_factor"] = np.max([np.abs(np.real(_herm(r, r)) * e2 - 1.0) for r in raw], axis=0)
    res["lagrangian_form"] = np.max([np.abs(np.imag(_herm(raw[i], raw[j]))) * e2 for i, j in pairs], axis=0)
    Phi, Psi = frames_from_jet(d, jet, d.theta(x, y))
    gram = Phi @ np.conj(np.swapaxes(Phi, -1, -2))
    res["frame_unitarity"] = np.max(np.abs(gram - np.eye(4)), axis=(-2, -1))
    res["det_frame"] = np.abs(np.linalg.det(Psi) - 1.0)

    g = psi_near(d, pts)
    diff = fd_first_richardson if richardson else fd_first
    n = len(pts)
    fd_err = [np.max(np.abs(diff(g, n, ax, h, fd_order) - raw[ax]), axis=-1) for ax in range(3)]
    res["fd_derivatives"] = np.max(fd_err, axis=0)
    return [make_record(n, res[n], tol[n]) for n in names]


# -- harmonic Lagrangian angle ------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """A scalar field on R^3 with its gradient and Laplacian (all batch callables
    of (x, y, z))."""

    value: Callable
    grad: Callable
    laplacian: Callable


def linear_angle(a, b) -> ScalarField:
    a, b = float(a), float(b)
    zero = lambda x, y, z: np.zeros(np.shape(x))  # noqa: E731
    return ScalarField(
        value=lambda x, y, z: a * x + b * y,
        grad=lambda x, y, z: (np.full(np.shape(x), a), np.full(np.shape(x), b), zero(x, y, z)),
        laplacian=zero,
    )


def profile_field(d: ImmersionData) -> ScalarField:
    """u(z) as a field on R^3."""
    prof = d.profile

    def grad(x, y, z):
        _, du, _ = prof.evaluate(z)
        zero = np.zeros(np.shape(x))
        return zero, zero, du

    def lap(x, y, z):
        return prof.evaluate(z)[2]

    return ScalarField(value=lambda x, y, z: prof.evaluate(z)[0], grad=grad, laplacian=lap)


def laplacian_of_angle(angle: ScalarField, conformal: ScalarField, x, y, z):
    """-e^{-u} [theta_xx + theta_yy + theta_zz + (u_x theta_x + u_y theta_y + u_z theta_z)/2]."""
    u = conformal.value(x, y, z)
    gu = conformal.grad(x, y, z)
    gt = angle.grad(x, y, z)
    drift = 0.5 * (gu[0] * gt[0] + gu[1] * gt[1] + gu[2] * gt[2])
    return -np.exp(-u) * (angle.laplacian(x, y, z) + drift)


def certify_harmonic_angle(d: ImmersionData, pts, angle: Optional[ScalarField] = None,
                           conformal: Optional[ScalarField] = None, tol=None) -> CheckRecord:
    tol = DEFAULT_TOLERANCES["harmonic_angle"] if tol is None else tol
    pts = _as_points(pts)
    if len(pts) == 0:
        return make_record("harmonic_angle", [], tol)
    angle = angle or linear_angle(d.a, d.b)
    conformal = conformal or profile_field(d)
    x, y, z = pts.T
    return make_record("harmonic_angle", np.abs(laplacian_of_angle(angle, conformal, x, y, z)), tol)


# -- zero curvature and frame transport ----------------------------------------------------

def _bracket(A, B):
    return A @ B - B @ A


def _fro(M):
    return np.sqrt(np.sum(np.abs(M) ** 2, axis=(-2, -1)))


def zero_curvature_residuals(d: ImmersionData, pts, h=1e-4, fd_order=4, connection=build_connection):
    """Frobenius norms of the three compatibility residuals at each point.

    d/dx and d/dy act through the e^{+-i theta} factors (exactly); d/dz is a
    central difference of the z-dependent entries at fixed theta.
    """
    pts = _as_points(pts)
    x, y, z = pts.T
    theta = d.theta(x, y)

    def mats(zz):
        return connection(d, zz).at_theta(theta)

    U, V, W = mats(z)
    if fd_order == 2:
        Up, Vp, Wp = mats(z + h)
        Um, Vm, Wm = mats(z - h)
        Uz, Vz = (Up - Um) / (2 * h), (Vp - Vm) / (2 * h)
    else:
        Up, Vp, _ = mats(z + h)
        Um, Vm, _ = mats(z - h)
        Up2, Vp2, _ = mats(z + 2 * h)
        Um2, Vm2, _ = mats(z - 2 * h)
        Uz = (-Up2 + 8 * Up - 8 * Um + Um2) / (12 * h)
        Vz = (-Vp2 + 8 * Vp - 8 * Vm + Vm2) / (12 * h)
    a, b = d.a, d.b
    Ux, Vx, Wx = (a * theta_derivative(M) for M in (U, V, W))
    Uy, Vy, Wy = (b * theta_derivative(M) for M in (U, V, W))
    r1 = _fro(Uy - Vx + _bracket(U, V))
    r2 = _fro(Vz - Wy + _bracket(V, W))
    r3 = _fro(Wx - Uz + _bracket(W, U))
    return np.maximum(np.maximum(r1, r2), r3)


def frame_transport_residuals(d: ImmersionData, pts, h=1e-4, fd_order=4, connection=build_connection):
    """|Psi_x - U Psi|, |Psi_y - V Psi|, |Psi_z - W Psi| (max) with FD partials of Psi."""
    pts = _as_points(pts)
    x, y, z = pts.T

    theta0 = d.theta(x, y)

    def psi_frame(offset):
        jet = psi_jet(d, x, y, z, offset)
        return frames_from_jet(d, jet, theta0 + d.theta(offset[:, 0], offset[:, 1]))[1]

    n = len(pts)
    Psi = psi_frame(_offset(n))
    mats = connection(d, z).at_theta(theta0)
    out = np.zeros(n)
    for axis, M in enumerate(mats):
        D = fd_first(psi_frame, n, axis, h, fd_order)
        out = np.maximum(out, _fro(D - M @ Psi))
    return out


def certify_zero_curvature(d: ImmersionData, pts, h=1e-4, fd_order=4, connection=build_connection,
                           tolerances=None) -> list:
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    pts = _as_points(pts)
    if len(pts) == 0:
        return [make_record("zero_curvature", [], tol["zero_curvature"]),
                make_record("frame_transport", [], tol["frame_transport"])]
    return [
        make_record("zero_curvature", zero_curvature_residuals(d, pts, h, fd_order, connection),
                    tol["zero_curvature"]),
        make_record("frame_transport", frame_transport_residuals(d, pts, h, fd_order, connection),
                    tol["frame_transport"]),
    ]


def convergence_orders(residual_fn, hs):
    """Observed orders log(r_i / r_{i+1}) / log(h_i / h_{i+1}) for a residual function of h."""
    r = [float(residual_fn(h)) for h in hs]
    orders = [math.log(r[i] / r[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in range(len(hs) - 1)]
    return r, orders


# -- reduced PDE system ----------------------------------------------------------------------

def reduced_system_residuals(d: ImmersionData, pts, h=1e-4):
    """Residuals of the six second-order equations for psi, second derivatives by FD.

    The mixed xy-equation is used in the form psi_xy - i(c2 psi_x + c1 psi_y) = 0,
    which is what the connection matrices encode.
    """
    pts = _as_points(pts)
    x, y, z = pts.T

    g = psi_near(d, pts)
    n = len(pts)
    jet = psi_jet(d, x, y, z)
    psi, px, py, pz = jet.psi, jet.psi_x, jet.psi_y, jet.psi_z
    u, du = jet.u[:, None], jet.du[:, None]
    c1, c2, c3 = float(d.params.c1), float(d.params.c2), d.c3
    a, b = d.a, d.b
    w = 1j * c3 * np.exp(-3 * u)
    e2u = np.exp(2 * u)

    pxx, pyy, pzz = (fd_second(g, n, ax, h) for ax in range(3))
    pxy = fd_mixed(g, n, 0, 1, h)
    pxz = fd_mixed(g, n, 0, 2, h)
    pyz = fd_mixed(g, n, 1, 2, h)

    eqs = [
        pxz - (du + w) * px,
        pyz - (du + w) * py,
        pxy - 1j * (c2 * px + c1 * py),
        pxx + e2u * psi + 1j * (a + c1) * px - 1j * c2 * py + (du - w) * pz,
        pyy + e2u * psi - 1j * c1 * px + 1j * (c2 + b) * py + (du - w) * pz,
        pzz + e2u * psi + (2 * w - du) * pz,
    ]
    return np.max([np.max(np.abs(e), axis=-1) for e in eqs], axis=0)


def certify_reduced_system(d: ImmersionData, pts, h=1e-4, tol=None) -> CheckRecord:
    tol = DEFAULT_TOLERANCES["reduced_system"] if tol is None else tol
    pts = _as_points(pts)
    if len(pts) == 0:
        return make_record("reduced_system", [], tol)
    return make_record("reduced_system", reduced_system_residuals(d, pts, h), tol)


# -- closure ------------------------------------------------------------------------------

def certify_periodicity(d: ImmersionData, n: int, lattice, pts, tol=None) -> CheckRecord:
    """Fubini-Study distance between the images of p and p + T for T in
    {(T_x, 0, 0), (0, T_y, 0), (0, 0, n tau)}."""
    tol = DEFAULT_TOLERANCES["periodicity"] if tol is None else tol
    pts = _as_points(pts)
    if len(pts) == 0:
        return make_record("periodicity", [], tol)
    x, y, z = pts.T
    base = eval_psi(d, x, y, z)
    shifts = {"z": (0.0, 0.0, n * d.tau)}
    if lattice is not None:
        shifts["x"] = (lattice.T_x, 0.0, 0.0)
        shifts["y"] = (0.0, lattice.T_y, 0.0)
    detail = {}
    worst = np.zeros(len(pts))
    for key in ("x", "y", "z"):
        if key not in shifts:
            continue
        sx, sy, sz = shifts[key]
        dist = fs_distance(eval_psi(d, x + sx, y + sy, z + sz), base)
        detail[key] = float(np.max(dist))
        worst = np.maximum(worst, dist)
    detail["n"] = int(n)
    return make_record("periodicity", worst, tol, detail)


# -- orchestration ------------------------------------------------------------------------

@dataclass(frozen=True)
class CertificationConfig:
    seed: int = 0
    n_points: int = 1000
    n_reduced: int = 100
    n_connection: int = 64
    h: float = 1e-4
    fd_order: int = 4
    richardson: bool = False
    x_range: float = 10.0
    z_periods: float = 3.0
    closure_n: Optional[int] = None
    tolerances: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in (data or {}).items() if k in known})


def sample_points(d: ImmersionData, n: int, rng, x_range=10.0, z_periods=3.0):
    if n <= 0:
        return np.zeros((0, 3))
    xy = rng.uniform(-x_range, x_range, size=(n, 2))
    z = rng.uniform(-z_periods * d.tau, z_periods * d.tau, size=(n, 1))
    return np.hstack([xy, z])


def provenance_hash(d: ImmersionData, config: CertificationConfig) -> str:
    payload = json.dumps({"params": d.params.to_dict(), "config": config.to_dict()}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def profile_records(d: ImmersionData, tol, n_grid=4001) -> list:
    prof = d.profile
    zs = np.linspace(0.0, 10 * prof.tau, n_grid)
    tau_ode = ode_return_period(prof.frakC, prof.c3)
    return [
        make_record("profile_energy", [energy_residual(prof, zs)], tol["profile_energy"]),
        make_record("profile_second_order", [second_order_residual(prof)], tol["profile_second_order"]),
        make_record("period_consistency", [abs(tau_ode - prof.tau) / prof.tau], tol["period_consistency"]),
        make_record("quintic_form", [quintic_residual(prof, zs)], tol["quintic_form"]),
    ]


def run_certification(d: ImmersionData, config: Optional[CertificationConfig] = None) -> CertificationReport:
    config = config or CertificationConfig()
    tol = {**DEFAULT_TOLERANCES, **config.tolerances}
    rng = np.random.default_rng(config.seed)
    pts = sample_points(d, config.n_points, rng, config.x_range, config.z_periods)
    records = []
    ids = d.spectral.identity_residuals
    if ids is None:
        from .params import gamma_identities
        ids = gamma_identities(d.spectral.alphas, d.spectral.betas, d.spectral.gammas)
    records.append(make_record("gamma_identities", list(ids.values()) if config.n_points > 0 else [],
                               tol["gamma_identities"]))
    if config.n_points > 0:
        records.extend(profile_records(d, tol))
    else:
        records.extend(make_record(n, [], tol[n]) for n in
                       ("profile_energy", "profile_second_order", "period_consistency", "quintic_form"))
    records.extend(certify_pointwise(d, pts, config.h, tol, config.fd_order, config.richardson))
    records.append(certify_harmonic_angle(d, pts, tol=tol["harmonic_angle"]))
    records.extend(certify_zero_curvature(d, pts[: config.n_connection], config.h, config.fd_order,
                                          tolerances=tol))
    records.append(certify_reduced_system(d, pts[: config.n_reduced], config.h, tol["reduced_system"]))
    if config.closure_n is not None:
        records.append(certify_periodicity(d, config.closure_n, xy_periods(d.spectral),
                                           pts[: config.n_reduced], tol["periodicity"]))
    return CertificationReport(tuple(records), provenance_hash(d, config))
