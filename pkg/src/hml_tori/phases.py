"""z-dependent factors P(z) = e^{u + i phase_P}, Q(z) = H(z) e^{i phase_G}, and
the per-period windings that decide whether the torus closes in z.

    phase_P(z) = c3 * int_0^z e^{-3u}
    phase_G(z) = c3 * int_0^z e^{-u} / (e^{2u} - C)
    H(z)       = sqrt(C - e^{2u})

Per period, Theta_rel = Theta_P - Theta_G = -c3 C int_0^tau e^{-3u}/(e^{2u} - C) dz
is the phase of the P-block relative to the Q-component; the image in CP^3
closes after n periods iff n * Theta_rel is a multiple of 2 pi.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NegativeRadicandError, QuadratureNonConvergence
from .profile import ProfileSolution, TurningPoints, find_turning_points, well_integral

_GL_NODES = 10
_tables = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class PhaseData:
    theta_P: float
    theta_G: float
    theta_rel: float

    @property
    def closing_ratio(self):
        """Theta_rel / 2 pi."""
        return self.theta_rel / (2 * math.pi)

    def to_dict(self):
        return {"theta_P": self.theta_P, "theta_G": self.theta_G, "theta_rel": self.theta_rel}

    @classmethod
    def from_dict(cls, data):
        return cls(float(data["theta_P"]), float(data["theta_G"]), float(data["theta_rel"]))


def _integrand_P(u, c3):
    return c3 * np.exp(-3 * u)


def _integrand_G(u, c3, frakC):
    return c3 * np.exp(-u) / (np.exp(2 * u) - frakC)


class _PhaseTable:
    """Cumulative phase integrals at the sample nodes of one period."""

    def __init__(self, profile: ProfileSolution):
        self.profile = profile
        x, w = leggauss(_GL_NODES)
        self.x = 0.5 * (x + 1.0)
        self.w = 0.5 * w
        z = profile.z
        h = np.diff(z)
        nodes = z[:-1, None] + h[:, None] * self.x[None, :]
        u, _, _ = profile.evaluate(nodes.ravel())
        u = u.reshape(nodes.shape)
        c3, frakC = profile.c3, profile.frakC
        intP = (_integrand_P(u, c3) @ self.w) * h
        intG = (_integrand_G(u, c3, frakC) @ self.w) * h
        self.cumP = np.concatenate([[0.0], np.cumsum(intP)])
        self.cumG = np.concatenate([[0.0], np.cumsum(intG)])

    def evaluate(self, z, which):
        prof = self.profile
        z = np.asarray(z, dtype=float)
        zr = prof.reduce(z)
        periods = np.round((z - zr) / prof.tau)
        j = np.clip(np.searchsorted(prof.z, zr, side="right") - 1, 0, len(prof.z) - 2)
        start = prof.z[j]
        span = zr - start
        nodes = start[..., None] + span[..., None] * self.x
        u, _, _ = prof.evaluate(nodes)
        if which == "P":
            vals, cum = _integrand_P(u, prof.c3), self.cumP
        else:
            vals, cum = _integrand_G(u, prof.c3, prof.frakC), self.cumG
        partial = (vals @ self.w) * span
        return cum[j] + partial + periods * cum[-1]

    def increment(self, z0, dz, which):
        """Integral over [z0, z0 + dz] for short dz (finite-difference offsets)."""
        prof = self.profile
        z0 = np.asarray(z0, dtype=float)
        dz = np.asarray(dz, dtype=float)
        nodes = z0[..., None] + dz[..., None] * self.x
        u, _, _ = prof.evaluate(nodes)
        if which == "P":
            vals = _integrand_P(u, prof.c3)
        else:
            vals = _integrand_G(u, prof.c3, prof.frakC)
        return (vals @ self.w) * dz


def _table(profile):
    tab = _tables.get(profile)
    if tab is None:
        tab = _PhaseTable(profile)
        _tables[profile] = tab
    return tab


def amplitude_H(profile: ProfileSolution, z):
    rad = profile.gap(z)
    if np.any(rad < 0):
        raise NegativeRadicandError(4, float(np.min(rad)))
    return np.sqrt(rad)


def phase_P(profile: ProfileSolution, z):
    return _table(profile).evaluate(z, "P")


def phase_G(profile: ProfileSolution, z):
    return _table(profile).evaluate(z, "G")


def phase_increment(profile: ProfileSolution, z0, dz, which="P"):
    """phase_X(z0 + dz) - phase_X(z0) for small dz, without cancellation."""
    return _table(profile).increment(z0, dz, which)


def period_phase_totals(profile: ProfileSolution):
    """(Theta_P, Theta_G) accumulated by the z-domain tables over one period."""
    tab = _table(profile)
    return float(tab.cumP[-1]), float(tab.cumG[-1])


def winding_integrals(frakC, c3, turning: Optional[TurningPoints] = None, tol=1e-13) -> PhaseData:
    """Per-period windings from the s-domain quadrature (no ODE solution needed)."""
    frakC, c3 = float(frakC), float(c3)
    t = turning or find_turning_points(frakC, c3)
    theta_P = well_integral(t, frakC, c3, lambda s, gap: c3 * s ** -1.5, tol=tol)
    theta_G = well_integral(t, frakC, c3, lambda s, gap: -c3 * s ** -0.5 / gap, tol=tol)
    theta_rel = well_integral(t, frakC, c3, lambda s, gap: c3 * frakC * s ** -1.5 / gap, tol=tol)
    split = theta_P - theta_G
    if abs(split - theta_rel) > 1e-12 * max(1.0, abs(theta_rel)):
        raise QuadratureNonConvergence(
            f"relative winding disagrees between routes: {split!r} vs {theta_rel!r}")
    return PhaseData(theta_P, theta_G, theta_rel)


def windings(profile: ProfileSolution, tol=1e-13) -> PhaseData:
    return winding_integrals(profile.frakC, profile.c3, profile.turning, tol=tol)


def rationalize_winding(theta_rel: float, max_denominator: int,
                        eps_close: float = 1e-9) -> Optional[Tuple[int, int]]:
    """Smallest n <= max_denominator with |n * theta_rel / 2pi - m| < eps_close.

    By the best-approximation property only continued-fraction convergents
    need to be tried, and |q_k x - p_k| decreases along them, so the first
    convergent under the threshold has the smallest denominator.
    """
    if max_denominator < 1:
        raise ValueError("max_denominator must be >= 1")
    x = Fraction(theta_rel / (2 * math.pi))
    eps = Fraction(eps_close)
    p_prev, q_prev = 1, 0
    p, q = math.floor(x), 1
    rest = x - p
    while q <= max_denominator:
        if abs(q * x - p) < eps:
            return q, p
        if rest == 0:
            return None
        x_inv = 1 / rest
        a = math.floor(x_inv)
        rest = x_inv - a
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
    return None
