"""The explicit map psi: R^3 -> S^7, its frames, connection matrices, the Hopf
projection to CP^3 and the (x, y) period lattice.

    psi = (g1 P e^{i(a1 x + b1 y)}, g2 P e^{i(a2 x + b2 y)}, g3 P e^{i(a3 x + b3 y)}, g4 Q)

Rows of the frame Phi are (psi, e^{-u} psi_x, e^{-u} psi_y, e^{-u} psi_z); Psi
replaces the first row by e^{i theta} psi with theta = a x + b y.

The Q-component carries a constant gauge phase ``q_phase`` chosen so that
det Psi = 1.  With it, det Phi = e^{-i theta}: the trace-free connection
matrices force det Psi to be constant, and the x- and y-dependence of det Phi
is e^{i(sum alpha) x + i(sum beta) y} = e^{-i(a x + b y)}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import ZeroVectorError
from .params import DerivedConstants, ModuliParams, SpectralData, derive_constants, number_to_json, spectral_data
from .phases import PhaseData, phase_G, phase_increment, phase_P, windings
from .profile import ProfileSolution, solve_profile

GAUGE_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class ImmersionData:
    params: ModuliParams
    derived: DerivedConstants
    spectral: SpectralData
    profile: ProfileSolution
    phases: PhaseData
    q_phase: float = 0.0

    @property
    def a(self):
        return float(self.params.a)

    @property
    def b(self):
        return float(self.params.b)

    @property
    def c3(self):
        return float(self.params.c3)

    @property
    def tau(self):
        return self.profile.tau

    def theta(self, x, y):
        return self.a * np.asarray(x, dtype=float) + self.b * np.asarray(y, dtype=float)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "derived": {"frakC": number_to_json(self.derived.frakC),
                        "frakB": number_to_json(self.derived.frakB)},
            "spectral": self.spectral.to_dict(),
            "phases": self.phases.to_dict(),
            "q_phase": self.q_phase,
            "profile": self.profile.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        from .params import parse_number

        params = ModuliParams.from_dict(data["params"])
        derived = DerivedConstants(parse_number(data["derived"]["frakC"]),
                                   parse_number(data["derived"]["frakB"]))
        return cls(
            params=params,
            derived=derived,
            spectral=SpectralData.from_dict(data["spectral"]),
            profile=ProfileSolution.from_dict(data["profile"]),
            phases=PhaseData.from_dict(data["phases"]),
            q_phase=float(data["q_phase"]),
        )


def build_immersion(params: ModuliParams, n_samples: int = 1024, rtol: float = 1e-12) -> ImmersionData:
    """Run the whole chain: constants, spectral data, profile, windings, gauge."""
    derived = derive_constants(params).require_positive()
    spec = spectral_data(params, derived)
    prof = solve_profile(float(derived.frakC), float(params.c3), n_samples=n_samples, rtol=rtol)
    d = ImmersionData(params, derived, spec, prof, windings(prof))
    return replace(d, q_phase=_det_gauge(d))


def _det_gauge(d: ImmersionData) -> float:
    """Constant phase of Q making det Psi = 1.

    At the origin every row of Phi except the first is purely imaginary, so
    det Phi(0) = +-i before gauging and the correction is -+pi/2.
    """
    frame = eval_frame(d, 0.0, 0.0, 0.0)
    det0 = complex(np.linalg.det(frame.Phi))
    if abs(abs(det0.imag) - 1.0) < 1e-8 and abs(det0.real) < 1e-8:
        return -math.copysign(math.pi / 2, det0.imag)
    return -math.atan2(det0.imag, det0.real)


# -- point evaluation ------------------------------------------------------------

@dataclass(frozen=True)
class PsiJet:
    """psi and its first partials at a batch of points (last axis = C^4)."""

    psi: np.ndarray
    psi_x: np.ndarray
    psi_y: np.ndarray
    psi_z: np.ndarray
    u: np.ndarray
    du: np.ndarray


def psi_jet(d: ImmersionData, x, y, z, offset=None) -> PsiJet:
    """psi and first partials at (x, y, z), or at (x, y, z) + offset.

    With ``offset`` (shape (..., 3)) the phases are accumulated as base phase
    plus increment, so finite-difference stencils around far-out base points
    do not lose digits to the rounding of large phase arguments.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    prof = d.profile
    c3, frakC = prof.c3, prof.frakC
    al = np.asarray(d.spectral.alphas)
    be = np.asarray(d.spectral.betas)
    if offset is None:
        zz = z
        ph_P = phase_P(prof, z)
        ph_G = phase_G(prof, z)
        E = np.exp(1j * (x[..., None] * al + y[..., None] * be))
    else:
        ox, oy, oz = np.moveaxis(np.broadcast_to(offset, x.shape + (3,)), -1, 0)
        zz = z + oz
        ph_P = phase_P(prof, z) + phase_increment(prof, z, oz, "P")
        ph_G = phase_G(prof, z) + phase_increment(prof, z, oz, "G")
        E = (np.exp(1j * (x[..., None] * al + y[..., None] * be))
             * np.exp(1j * (ox[..., None] * al + oy[..., None] * be)))
    u, du, _ = prof.evaluate(zz)
    eu = np.exp(u)
    P = eu * np.exp(1j * ph_P)
    dP = (du + 1j * c3 * eu ** -3) * P
    H = np.sqrt(prof.gap(zz))
    Q = H * np.exp(1j * (ph_G + d.q_phase))
    dQ = eu ** 5 * Q / (1j * c3 - du * eu ** 3)

    g = np.asarray(d.spectral.gammas[:3])
    g4 = d.spectral.gammas[3]
    block = g * E
    zero = np.zeros(x.shape + (1,), dtype=complex)

    psi = np.concatenate([block * P[..., None], (g4 * Q)[..., None]], axis=-1)
    psi_x = np.concatenate([1j * al * block * P[..., None], zero], axis=-1)
    psi_y = np.concatenate([1j * be * block * P[..., None], zero], axis=-1)
    psi_z = np.concatenate([block * dP[..., None], (g4 * dQ)[..., None]], axis=-1)
    return PsiJet(psi, psi_x, psi_y, psi_z, u, du)


def eval_psi(d: ImmersionData, x, y, z, offset=None) -> np.ndarray:
    return psi_jet(d, x, y, z, offset).psi


@dataclass(frozen=True)
class FrameMatrices:
    Phi: np.ndarray
    Psi: np.ndarray
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray


def frames_from_jet(d: ImmersionData, jet: PsiJet, theta):
    scale = np.exp(-jet.u)[..., None]
    Phi = np.stack([jet.psi, scale * jet.psi_x, scale * jet.psi_y, scale * jet.psi_z], axis=-2)
    Psi = Phi.copy()
    Psi[..., 0, :] *= np.exp(1j * np.asarray(theta))[..., None]
    return Phi, Psi


def eval_frame(d: ImmersionData, x, y, z) -> FrameMatrices:
    jet = psi_jet(d, x, y, z)
    Phi, Psi = frames_from_jet(d, jet, d.theta(x, y))
    U, V, W = build_connection(d, z).at_theta(d.theta(x, y))
    return FrameMatrices(Phi, Psi, U, V, W)


# -- connection ----------------------------------------------------------------

_E11 = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)


@dataclass(frozen=True)
class Connection:
    """U, V, W with theta factored out (stored at theta = 0).

    The theta-dependent matrices are D M0 D^* with D = diag(e^{i theta}, 1, 1, 1),
    which puts e^{i theta} on row 1 and e^{-i theta} on column 1.
    """

    U0: np.ndarray
    V0: np.ndarray
    W0: np.ndarray

    def at_theta(self, theta):
        ph = np.exp(1j * np.asarray(theta, dtype=float))
        D = np.ones(ph.shape + (4,), dtype=complex)
        D[..., 0] = ph
        conj = np.conj(D)
        return tuple(D[..., :, None] * M * conj[..., None, :] for M in (self.U0, self.V0, self.W0))


def theta_derivative(M):
    """d/dtheta of D M0 D^*, expressed through the reinstated matrix M."""
    return 1j * (_E11 @ M - M @ _E11)


def build_connection(d: ImmersionData, z) -> Connection:
    prof = d.profile
    u, du, _ = prof.evaluate(z)
    u, du = np.asarray(u), np.asarray(du)
    a, b = d.a, d.b
    c1, c2, c3 = float(d.params.c1), float(d.params.c2), prof.c3
    eu = np.exp(u)
    w = 1j * c3 * np.exp(-3 * u)
    shape = u.shape + (4, 4)
    U = np.zeros(shape, dtype=complex)
    V = np.zeros(shape, dtype=complex)
    W = np.zeros(shape, dtype=complex)

    U[..., 0, 0] = 1j * a
    U[..., 0, 1] = eu
    U[..., 1, 0] = -eu
    U[..., 1, 1] = -1j * (a + c1)
    U[..., 1, 2] = 1j * c2
    U[..., 1, 3] = w - du
    U[..., 2, 1] = 1j * c2
    U[..., 2, 2] = 1j * c1
    U[..., 3, 1] = w + du

    V[..., 0, 0] = 1j * b
    V[..., 0, 2] = eu
    V[..., 1, 1] = 1j * c2
    V[..., 1, 2] = 1j * c1
    V[..., 2, 0] = -eu
    V[..., 2, 1] = 1j * c1
    V[..., 2, 2] = -1j * (b + c2)
    V[..., 2, 3] = w - du
    V[..., 3, 2] = w + du

    W[..., 0, 3] = eu
    W[..., 1, 1] = w
    W[..., 2, 2] = w
    W[..., 3, 0] = -eu
    W[..., 3, 3] = -2 * w
    return Connection(U, V, W)


# -- CP^3 ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CP3Point:
    """Unit representative with the first component of modulus > 1e-8 real positive."""

    rep: np.ndarray


def hopf_project(v) -> CP3Point:
    v = np.asarray(v, dtype=complex)
    nrm = np.linalg.norm(v)
    if nrm == 0 or not np.isfinite(nrm):
        raise ZeroVectorError("cannot project the zero vector")
    v = v / nrm
    for comp in v:
        if abs(comp) > GAUGE_THRESHOLD:
            return CP3Point(v * (abs(comp) / comp))
    raise ZeroVectorError("no component above the gauge threshold")


def fs_distance(v, w):
    """Fubini-Study distance between the lines through unit vectors v and w.

    Equal to arccos|<v, w>|, evaluated as atan2(|v ^ w|, |<v, w>|) so that
    distances far below sqrt(machine epsilon) are still resolved.
    """
    v = np.asarray(v, dtype=complex)
    w = np.asarray(w, dtype=complex)
    inner = np.abs(np.sum(v * np.conj(w), axis=-1))
    wedge2 = np.zeros(inner.shape)
    n = v.shape[-1]
    for i in range(n):
        for j in range(i + 1, n):
            wedge2 = wedge2 + np.abs(v[..., i] * w[..., j] - v[..., j] * w[..., i]) ** 2
    return np.arctan2(np.sqrt(wedge2), inner)


def fubini_study_distance(p: CP3Point, q: CP3Point) -> float:
    return float(fs_distance(p.rep, q.rep))


# -- (x, y) periods -----------------------------------------------------------------

@dataclass(frozen=True)
class XYPeriods:
    """T_x = 2 pi * kx and T_y = 2 pi * ky with exact rational kx, ky."""

    kx: Fraction
    ky: Fraction

    @property
    def T_x(self):
        return 2 * math.pi * float(self.kx)

    @property
    def T_y(self):
        return 2 * math.pi * float(self.ky)


def _rational_gcd(values):
    num, den = 0, 1
    for v in values:
        v = Fraction(v)
        num = math.gcd(num, v.numerator)
        den = den * v.denominator // math.gcd(den, v.denominator)
    return Fraction(num, den)


def xy_periods(s: SpectralData) -> Optional[XYPeriods]:
    """Smallest T with all alpha_j T in 2 pi Z (and likewise for beta), or None
    unless every root is an exact rational."""
    if not s.all_rational or s.rational_betas is None or any(b is None for b in s.rational_betas):
        return None
    gx = _rational_gcd(s.rational_roots)
    gy = _rational_gcd(s.rational_betas)
    return XYPeriods(1 / gx, 1 / gy)
