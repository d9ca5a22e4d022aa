"""The profile equation u'^2 + e^{2u} + c3^2 e^{-6u} = C and its periodic solutions.

Turning points are handled in the variable s = e^{2u}, where u' = 0 becomes the
quartic s^4 - C s^3 + c3^2 = 0.  Its positive roots bracket the minimum of
s^4 - C s^3 at s = 3C/4, which gives the closed-form existence criterion

    c3 != 0  and  c3^2 < 27 C^4 / 256.

This threshold is derived here (it is the sign condition on the quartic's
minimum); the quintic in q = -1/(4 s) carries the same root pattern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import BPoly
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .errors import MultipleRootError, NoOscillationError, QuadratureNonConvergence

MIN_SAMPLES = 64


def oscillation_exists(frakC: float, c3: float) -> bool:
    if frakC <= 0 or c3 == 0:
        return False
    return c3 * c3 < 27.0 * frakC ** 4 / 256.0


def quartic(s, frakC, c3):
    return s ** 3 * (s - frakC) + c3 * c3


@dataclass(frozen=True)
class TurningPoints:
    s_min: float
    s_max: float

    @property
    def u_min(self):
        return 0.5 * math.log(self.s_min)

    @property
    def u_max(self):
        return 0.5 * math.log(self.s_max)


def _newton_quartic(s, frakC, c3, iters=6):
    for _ in range(iters):
        f = quartic(s, frakC, c3)
        df = s * s * (4 * s - 3 * frakC)
        if df == 0:
            break
        s_new = s - f / df
        if abs(s_new - s) <= 1e-16 * abs(s):
            return s_new
        s = s_new
    return s


def find_turning_points(frakC: float, c3: float) -> TurningPoints:
    """The two positive simple roots of s^4 - C s^3 + c3^2 around s = 3C/4."""
    frakC, c3 = float(frakC), float(c3)
    if not oscillation_exists(frakC, c3):
        raise NoOscillationError(
            f"no periodic profile for C={frakC!r}, c3={c3!r} (need c3 != 0, c3^2 < 27 C^4/256)")
    s_star = 0.75 * frakC
    f = lambda s: quartic(s, frakC, c3)  # noqa: E731
    lo = brentq(f, 0.0, s_star, xtol=1e-300, rtol=1e-15, maxiter=500)
    hi = brentq(f, s_star, frakC, xtol=1e-300, rtol=1e-15, maxiter=500)
    lo, hi = _newton_quartic(lo, frakC, c3), _newton_quartic(hi, frakC, c3)
    if hi - lo < 1e-9 * frakC:
        raise MultipleRootError(f"turning points merge (gap {hi - lo:.3e}); oscillation degenerates")
    return TurningPoints(lo, hi)


_PANEL_NODES = 20


@lru_cache(maxsize=None)
def _panel_rule(panels):
    """Composite Gauss-Legendre nodes/weights on [0, 1] with equal panels."""
    x, w = roots_legendre(_PANEL_NODES)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    left = np.arange(panels)[:, None] / panels
    return (left + x / panels).ravel(), np.tile(w / panels, panels)


def well_integral(t: TurningPoints, frakC, c3, weight=None, tol=1e-13,
                  reverse=False, max_panels=1 << 12):
    """Integral of weight(s, C - s) ds / (s sqrt(C - s - c3^2/s^3)) over [s_min, s_max].

    With weight = 1 this is the period of u.  The substitution
    s = s_min + (s_max - s_min) sin^2(phi) removes both endpoint singularities:
    the integrand becomes 2 sqrt(s) weight(s) / sqrt(g(s)), where g is the
    positive quadratic cofactor of (s - s_min)(s - s_max) in the quartic.
    A composite 20-point Gauss-Legendre rule on phi in [0, pi/2] is refined
    by doubling the panel count until two successive results agree to
    ``tol`` (relative).
    """
    smin, smax = t.s_min, t.s_max
    frakC, c3 = float(frakC), float(c3)
    p = smin + smax - frakC
    q = c3 * c3 / (smin * smax)
    width = smax - smin

    def rule(panels):
        x, w = _panel_rule(panels)
        phi = x * (math.pi / 2.0)
        lo, hi = width * np.sin(phi) ** 2, width * np.cos(phi) ** 2
        if reverse:
            lo, hi = hi, lo
        s = smin + lo
        g = s * s + p * s + q
        vals = 2.0 * np.sqrt(s) / np.sqrt(g)
        if weight is not None:
            # C - s from the factorisation, free of cancellation near s_max
            gap = (c3 * c3 + lo * hi * g) / s ** 3
            vals = vals * weight(s, gap)
        return float(np.dot(w, vals)) * (math.pi / 2.0)

    panels = 1
    prev = rule(panels)
    while panels < max_panels:
        panels *= 2
        cur = rule(panels)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureNonConvergence(f"well quadrature did not converge with {panels} panels")


def compute_period(t: TurningPoints, frakC, c3, tol=1e-13, reverse=False) -> float:
    if not oscillation_exists(float(frakC), float(c3)):
        raise NoOscillationError("period is infinite without an oscillating profile")
    return well_integral(t, frakC, c3, tol=tol, reverse=reverse)


# -- integrator --------------------------------------------------------------

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6] + (0.0,)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


class ProfileIntegrator:
    """Adaptive Dormand-Prince 5(4) for u'' = -e^{2u} + 3 c3^2 e^{-6u}.

    After every accepted step the state is pulled back onto the energy level
    u'^2 + e^{2u} + c3^2 e^{-6u} = C by Newton steps along the gradient of the
    energy.  Rescaling u' alone is ill-conditioned at turning points, where
    u' vanishes; the gradient direction degrades gracefully there.
    """

    def __init__(self, frakC, c3, rtol=1e-12, atol=None, project=True):
        self.frakC = float(frakC)
        self.c3sq = float(c3) ** 2
        self.rtol = rtol
        self.atol = rtol if atol is None else atol
        self.project = project
        self.nsteps = 0

    def rhs(self, u, v):
        return v, -math.exp(2 * u) + 3 * self.c3sq * math.exp(-6 * u)

    def energy(self, u, v):
        return v * v + math.exp(2 * u) + self.c3sq * math.exp(-6 * u) - self.frakC

    def _project(self, u, v):
        if not self.project:
            return u, v
        for _ in range(3):
            e2, e6 = math.exp(2 * u), self.c3sq * math.exp(-6 * u)
            E = v * v + e2 + e6 - self.frakC
            if E == 0.0:
                break
            gu, gv = 2 * e2 - 6 * e6, 2 * v
            nrm = gu * gu + gv * gv
            if nrm == 0.0:
                break
            u -= E * gu / nrm
            v -= E * gv / nrm
        return u, v

    def step(self, u, v, h):
        ku, kv = [0.0] * 7, [0.0] * 7
        ku[0], kv[0] = self.rhs(u, v)
        for i in range(1, 7):
            row = _A[i]
            uu = u + h * sum(row[j] * ku[j] for j in range(i))
            vv = v + h * sum(row[j] * kv[j] for j in range(i))
            ku[i], kv[i] = self.rhs(uu, vv)
        un = u + h * sum(_B[j] * ku[j] for j in range(7))
        vn = v + h * sum(_B[j] * kv[j] for j in range(7))
        eu = h * sum(_E[j] * ku[j] for j in range(7))
        ev = h * sum(_E[j] * kv[j] for j in range(7))
        err = max(abs(eu) / (self.atol + self.rtol * max(abs(u), abs(un))),
                  abs(ev) / (self.atol + self.rtol * max(abs(v), abs(vn))))
        return un, vn, err

    def advance(self, u, v, h_total, h_next):
        """Integrate exactly ``h_total`` forward; return (u, v, next step guess)."""
        done = 0.0
        while done < h_total:
            remaining = h_total - done
            h = min(h_next, remaining)
            last = h >= remaining
            un, vn, err = self.step(u, v, h)
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if err <= 1.0:
                u, v = self._project(un, vn)
                self.nsteps += 1
                done = h_total if last else done + h
                # a step truncated to land on the target says nothing about the next one
                h_next = max(h * fac, h_next) if last else h * fac
            else:
                h_next = h * min(fac, 0.9)
                if h_next < 1e-14 * max(1.0, h_total):
                    raise QuadratureNonConvergence("step size underflow in profile integrator")
        return u, v, h_next

    def sample(self, u0, v0, z_eval, h0=1e-3):
        """States at increasing ``z_eval`` (starting from z_eval[0] with (u0, v0))."""
        z_eval = np.asarray(z_eval, dtype=float)
        us, vs = np.empty_like(z_eval), np.empty_like(z_eval)
        u, v = self._project(float(u0), float(v0))
        us[0], vs[0] = u, v
        h = h0
        for k in range(1, len(z_eval)):
            u, v, h = self.advance(u, v, z_eval[k] - z_eval[k - 1], h)
            us[k], vs[k] = u, v
        return us, vs

    def return_time(self, u0, v0=0.0, crossings=2, h0=1e-3, z_max=1e6):
        """Time at which u' has changed sign ``crossings`` times."""
        u, v = self._project(float(u0), float(v0))
        z, h = 0.0, h0
        count = 0
        sign = 0.0
        while z < z_max:
            un, vn, err = self.step(u, v, h)
            if err > 1.0:
                h *= max(0.2, 0.9 * err ** -0.2)
                continue
            un, vn = self._project(un, vn)
            if sign == 0.0:
                sign = math.copysign(1.0, vn) if vn != 0 else 0.0
            elif vn * sign < 0:
                count += 1
                if count == crossings:
                    u_s, v_s = u, v
                    g = lambda hh: self._project(*self.step(u_s, v_s, hh)[:2])[1]  # noqa: E731
                    hz = brentq(g, 0.0, h, xtol=1e-16, rtol=1e-15)
                    return z + hz
                sign = -sign
            u, v, z = un, vn, z + h
            h *= 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        raise QuadratureNonConvergence("u' did not return to zero")


def ode_return_period(frakC, c3, rtol=1e-12) -> float:
    """Period measured by integrating from the u-minimum until u' vanishes twice."""
    t = find_turning_points(frakC, c3)
    return ProfileIntegrator(frakC, c3, rtol=rtol).return_time(t.u_min)


# -- solution object ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProfileSolution:
    """One period of u sampled on z_k = k tau / N, k = 0..N, with z = 0 at the
    minimum of u.  Evaluation anywhere in R uses periodicity and quintic
    Hermite interpolation on (u, u', u'')."""

    frakC: float
    c3: float
    turning: TurningPoints
    tau: float
    z: np.ndarray
    u: np.ndarray
    du: np.ndarray

    @property
    def n_samples(self):
        return len(self.z) - 1

    def second_derivative(self, u):
        return -np.exp(2 * u) + 3 * self.c3 ** 2 * np.exp(-6 * u)

    @cached_property
    def _interp(self):
        data = np.column_stack([self.u, self.du, self.second_derivative(self.u)])
        return BPoly.from_derivatives(self.z, data, extrapolate=False)

    @cached_property
    def _interp_d1(self):
        return self._interp.derivative(1)

    @cached_property
    def _interp_d2(self):
        return self._interp.derivative(2)

    @cached_property
    def _gap_interp(self):
        # g = C - e^{2u}, interpolated in its own right: near s_max it is small
        # and computing it from u would amplify rounding in u by e^{2u} / g.
        s = np.exp(2 * self.u)
        g = -self.frakC * np.expm1(2 * self.u - math.log(self.frakC))
        dg = -2 * self.du * s
        ddg = -2 * s * (self.second_derivative(self.u) + 2 * self.du ** 2)
        return BPoly.from_derivatives(self.z, np.column_stack([g, dg, ddg]), extrapolate=False)

    def gap(self, z):
        """C - e^{2u(z)}, accurate to rounding relative to its own size."""
        return self._gap_interp(self.reduce(z))

    def reduce(self, z):
        zr = np.mod(np.asarray(z, dtype=float), self.tau)
        return np.clip(zr, 0.0, self.z[-1])

    def evaluate(self, z):
        """(u, u', u'') at z (scalar or array)."""
        zr = self.reduce(z)
        return self._interp(zr), self._interp_d1(zr), self._interp_d2(zr)

    def to_dict(self):
        return {
            "frakC": float(self.frakC),
            "c3": float(self.c3),
            "s_min": self.turning.s_min,
            "s_max": self.turning.s_max,
            "tau": self.tau,
            "samples": [[float(a), float(b), float(c)] for a, b, c in zip(self.z, self.u, self.du)],
        }

    @classmethod
    def from_dict(cls, data):
        samples = np.asarray(data["samples"], dtype=float)
        return cls(
            frakC=float(data["frakC"]),
            c3=float(data["c3"]),
            turning=TurningPoints(float(data["s_min"]), float(data["s_max"])),
            tau=float(data["tau"]),
            z=samples[:, 0].copy(),
            u=samples[:, 1].copy(),
            du=samples[:, 2].copy(),
        )


def solve_profile(frakC, c3, n_samples: int = 1024, rtol: float = 1e-12,
                  tol_period: float = 1e-13) -> ProfileSolution:
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_SAMPLES}")
    frakC, c3 = float(frakC), float(c3)
    t = find_turning_points(frakC, c3)
    tau = compute_period(t, frakC, c3, tol=tol_period)
    z = np.linspace(0.0, tau, n_samples + 1)
    integ = ProfileIntegrator(frakC, c3, rtol=rtol)
    u, du = integ.sample(t.u_min, 0.0, z, h0=tau / n_samples)
    return ProfileSolution(frakC, c3, t, tau, z, u, du)


def energy_residual(sol: ProfileSolution, z_grid) -> float:
    u, du, _ = sol.evaluate(z_grid)
    r = du ** 2 + np.exp(2 * u) + sol.c3 ** 2 * np.exp(-6 * u) - sol.frakC
    return float(np.max(np.abs(r))) if np.size(r) else 0.0


# 8th-order central stencil for the second derivative
_D2_STENCIL = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])


def second_order_residual(sol: ProfileSolution) -> float:
    """max |u'' + e^{2u} - 3 c3^2 e^{-6u}| over the samples, with u'' obtained by
    numerical differentiation of the sampled u (periodic 8th-order stencil)."""
    u = sol.u[:-1]
    h = sol.tau / sol.n_samples
    half = len(_D2_STENCIL) // 2
    udd = sum(c * np.roll(u, half - k) for k, c in enumerate(_D2_STENCIL)) / (h * h)
    r = udd + np.exp(2 * u) - 3 * sol.c3 ** 2 * np.exp(-6 * u)
    return float(np.max(np.abs(r)))


def quintic_residual(sol: ProfileSolution, z_grid) -> float:
    """Residual of q'^2 = 256 c3^2 q^5 + 4 C q^2 + q for q = -e^{-2u}/4."""
    u, du, _ = sol.evaluate(z_grid)
    q = -0.25 * np.exp(-2 * u)
    dq = -2 * du * q
    r = dq ** 2 - (256 * sol.c3 ** 2 * q ** 5 + 4 * sol.frakC * q ** 2 + q)
    return float(np.max(np.abs(r)))


def integrate_profile_ode(frakC, c3, u0, du0, z_eval, rtol=1e-12):
    """General-purpose trajectory of the profile ODE (including the non-periodic
    c3 = 0 branch), sampled at increasing ``z_eval`` starting from z_eval[0]."""
    integ = ProfileIntegrator(frakC, c3, rtol=rtol)
    return integ.sample(u0, du0, z_eval)
