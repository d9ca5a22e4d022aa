"""Parameter algebra: derived constants, the spectral cubic, beta slopes and
gamma amplitudes.

The cubic is

    alpha**3 + a*alpha**2 - B*alpha + c1*C = 0,

with C = a*c1 + b*c2 + 2*c1**2 + 2*c2**2 and B = 2*c1*a + 3*c1**2 + c2*b + 3*c2**2.
Each root alpha_j pairs with the y-frequency beta_j = c2*alpha_j/(alpha_j - c1).

Rational inputs (``int``, ``Fraction`` or strings such as ``"3/2"``) are kept
exact; rational roots are then certified by exact substitution. Floats are
treated as inexact and go straight to the numeric path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from numbers import Rational, Real
from typing import Optional

import numpy as np

from .errors import (
    ComplexRootsError,
    DegenerateRootError,
    IdentityViolationError,
    InvalidParameterError,
    MultipleRootError,
    NegativeRadicandError,
    NonPositiveCError,
)

ROOT_GAP_RTOL = 1e-9
IDENTITY_TOL = 1e-12


def parse_number(value) -> Real:
    """Coerce config input to an exact ``Fraction`` when possible.

    Strings ("3/2", "0.25", "-4") and ints become fractions; floats stay floats.
    """
    if isinstance(value, bool):
        raise InvalidParameterError(f"not a number: {value!r}")
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidParameterError(f"cannot parse number {value!r}") from exc
    if isinstance(value, dict) and set(value) == {"num", "den"}:
        return Fraction(int(value["num"]), int(value["den"]))
    if isinstance(value, Real):
        if not math.isfinite(value):
            raise InvalidParameterError(f"non-finite value {value!r}")
        return float(value)
    raise InvalidParameterError(f"not a number: {value!r}")


def is_exact(x) -> bool:
    return isinstance(x, Fraction)


def number_to_json(x):
    if isinstance(x, Fraction):
        return {"num": x.numerator, "den": x.denominator}
    return float(x)


@dataclass(frozen=True)
class ModuliParams:
    """The five real moduli of the family.

    ``a`` and ``b`` are the slopes of the Lagrangian angle ``theta = a*x + b*y``;
    ``c1``, ``c2``, ``c3`` are the constants of the connection matrices.
    """

    a: Real
    b: Real
    c1: Real
    c2: Real
    c3: Real

    def __post_init__(self):
        for name in ("a", "b", "c1", "c2", "c3"):
            object.__setattr__(self, name, parse_number(getattr(self, name)))
        if self.c1 == 0 or self.c2 == 0:
            raise InvalidParameterError(
                "c1 and c2 must be nonzero: alpha = c1 solves the cubic iff c1*c2**2 = 0")

    @property
    def is_rational(self) -> bool:
        """True when a, b, c1, c2 are exact (c3 never enters the cubic)."""
        return all(is_exact(v) for v in (self.a, self.b, self.c1, self.c2))

    def as_floats(self):
        return tuple(float(v) for v in (self.a, self.b, self.c1, self.c2, self.c3))

    def to_dict(self):
        return {k: number_to_json(getattr(self, k)) for k in ("a", "b", "c1", "c2", "c3")}

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: data[k] for k in ("a", "b", "c1", "c2", "c3")})


@dataclass(frozen=True)
class DerivedConstants:
    frakC: Real
    frakB: Real

    @property
    def positive(self) -> bool:
        return self.frakC > 0

    def require_positive(self):
        if not self.positive:
            raise NonPositiveCError(f"frak C = {self.frakC} <= 0; no periodic profile")
        return self


def derive_constants(p: ModuliParams) -> DerivedConstants:
    """Return (C, B). Non-positive C is flagged via ``.positive``, not raised."""
    a, b, c1, c2 = p.a, p.b, p.c1, p.c2
    frakC = a * c1 + b * c2 + 2 * c1 ** 2 + 2 * c2 ** 2
    frakB = 2 * c1 * a + 3 * c1 ** 2 + c2 * b + 3 * c2 ** 2
    return DerivedConstants(frakC=frakC, frakB=frakB)


@dataclass(frozen=True)
class SpectralData:
    """Roots, slopes and amplitudes entering the explicit immersion.

    ``rational_roots`` is aligned with ``alphas``: each entry is the exact
    ``Fraction`` when that root was certified rational, else ``None``.
    """

    alphas: tuple
    betas: Optional[tuple] = None
    gammas: Optional[tuple] = None
    rational_roots: Optional[tuple] = None
    rational_betas: Optional[tuple] = None
    identity_residuals: Optional[dict] = field(default=None, compare=False)

    @property
    def all_rational(self) -> bool:
        return self.rational_roots is not None and all(r is not None for r in self.rational_roots)

    def to_dict(self):
        def opt(seq, conv):
            return None if seq is None else [conv(v) for v in seq]

        return {
            "alphas": [float(v) for v in self.alphas],
            "betas": opt(self.betas, float),
            "gammas": opt(self.gammas, float),
            "rational_roots": opt(self.rational_roots, lambda r: None if r is None else number_to_json(r)),
            "rational_betas": opt(self.rational_betas, lambda r: None if r is None else number_to_json(r)),
        }

    @classmethod
    def from_dict(cls, data):
        def opt(seq, conv):
            return None if seq is None else tuple(conv(v) for v in seq)

        exact = lambda r: None if r is None else parse_number(r)  # noqa: E731
        return cls(
            alphas=tuple(float(v) for v in data["alphas"]),
            betas=opt(data.get("betas"), float),
            gammas=opt(data.get("gammas"), float),
            rational_roots=opt(data.get("rational_roots"), exact),
            rational_betas=opt(data.get("rational_betas"), exact),
        )


# -- cubic -------------------------------------------------------------------

def cubic_coefficients(p: ModuliParams, d: DerivedConstants):
    """Monic coefficients (1, a, -B, c1*C)."""
    return (1, p.a, -d.frakB, p.c1 * d.frakC)


def cubic_value(coeffs, x):
    c0, c1, c2, c3 = coeffs
    return ((c0 * x + c1) * x + c2) * x + c3


def cubic_discriminant(coeffs):
    _, B, C, D = coeffs
    return 18 * B * C * D - 4 * B ** 3 * D + B ** 2 * C ** 2 - 4 * C ** 3 - 27 * D ** 2


def _divisors(n: int):
    n = abs(n)
    small, large = [], []
    i = 1
    while i * i <= n:
        if n % i == 0:
            small.append(i)
            if i != n // i:
                large.append(n // i)
        i += 1
    return small + large[::-1]


def _integer_coefficients(coeffs):
    lcm = 1
    for c in coeffs:
        lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
    ints = [int(c * lcm) for c in coeffs]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    return [v // g for v in ints]


def rational_roots_of_cubic(coeffs, approx_roots):
    """Exact rational roots of a cubic with Fraction coefficients.

    A rational root p/q in lowest terms has q dividing the leading integer
    coefficient, so for every such q the only candidate numerator near a
    numeric root r is round(r*q). Every candidate is checked by exact
    substitution, so a returned root is certified.
    """
    ints = _integer_coefficients([Fraction(c) for c in coeffs])
    lead, const = ints[0], ints[-1]
    found = set()
    if const == 0:
        found.add(Fraction(0))
    for r in approx_roots:
        if abs(r.imag) > 1e-6 * (1 + abs(r.real)):
            continue
        for q in _divisors(lead):
            num = round(r.real * q)
            for cand_num in (num - 1, num, num + 1):
                cand = Fraction(cand_num, q)
                if cubic_value(ints, cand) == 0:
                    found.add(cand)
    return sorted(found, reverse=True)


def _is_rational_square(q: Fraction):
    if q < 0:
        return None
    rn, rd = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if rn * rn == q.numerator and rd * rd == q.denominator:
        return Fraction(rn, rd)
    return None


def _polish(coeffs, x, iters=4):
    fc = [float(c) for c in coeffs]
    for _ in range(iters):
        f = cubic_value(fc, x)
        df = (3 * fc[0] * x + 2 * fc[1]) * x + fc[2]
        if df == 0:
            break
        step = f / df
        x_new = x - step
        if abs(cubic_value(fc, x_new)) >= abs(f):
            break
        x = x_new
    return x


def _check_gaps(alphas, c1):
    scale = 1 + max(abs(x) for x in alphas)
    for i in range(3):
        for j in range(i + 1, 3):
            if abs(alphas[i] - alphas[j]) <= ROOT_GAP_RTOL * scale:
                raise MultipleRootError(f"roots {alphas[i]!r} and {alphas[j]!r} coincide")
    for x in alphas:
        if abs(x - float(c1)) <= ROOT_GAP_RTOL * (1 + abs(float(c1))):
            raise DegenerateRootError(f"root {x!r} equals c1 = {c1}")


def solve_spectral_cubic(p: ModuliParams, d: DerivedConstants) -> SpectralData:
    """All three real roots of the spectral cubic, sorted descending."""
    d.require_positive()
    coeffs = cubic_coefficients(p, d)
    exact = all(is_exact(Fraction(c) if isinstance(c, int) else c) for c in coeffs)
    approx = np.roots([float(c) for c in coeffs])

    if exact:
        coeffs = tuple(Fraction(c) for c in coeffs)
        disc = cubic_discriminant(coeffs)
        if disc < 0:
            raise ComplexRootsError("spectral cubic has a complex-conjugate pair")
        if disc == 0:
            raise MultipleRootError("spectral cubic has a repeated root")
        rats = rational_roots_of_cubic(coeffs, approx)
        if any(r == p.c1 for r in rats):
            raise DegenerateRootError(f"root equals c1 = {p.c1}")
        if rats:
            alphas, flags = _complete_from_rational(coeffs, rats[0])
            _check_gaps(alphas, p.c1)
            order = sorted(range(3), key=lambda i: -alphas[i])
            return SpectralData(
                alphas=tuple(alphas[i] for i in order),
                rational_roots=tuple(flags[i] for i in order),
            )
        rational_flags = (None, None, None)
    else:
        rational_flags = None

    scale = 1 + max(abs(r) for r in approx)
    if np.max(np.abs(approx.imag)) > 1e-9 * scale:
        pair = np.argsort(np.abs(approx.imag))[1:]
        if abs(approx[pair[0]] - approx[pair[1]]) <= 1e-7 * scale:
            raise MultipleRootError("spectral cubic has a (near-)repeated root")
        raise ComplexRootsError("spectral cubic has a complex-conjugate pair")
    alphas = sorted((_polish(coeffs, float(r.real)) for r in approx), reverse=True)
    _check_gaps(alphas, p.c1)
    return SpectralData(alphas=tuple(alphas), rational_roots=rational_flags)


def _complete_from_rational(coeffs, root: Fraction):
    """Deflate by an exact rational root; solve the quadratic exactly if it splits."""
    _, B, C, _ = coeffs
    # x^3 + Bx^2 + Cx + D = (x - r)(x^2 + px + q)
    pq = B + root
    qq = C + root * pq
    disc = pq * pq - 4 * qq
    if disc < 0:
        raise ComplexRootsError("spectral cubic has a complex-conjugate pair")
    sq = _is_rational_square(disc)
    if sq is not None:
        r2, r3 = (-pq + sq) / 2, (-pq - sq) / 2
        return [float(root), float(r2), float(r3)], [root, r2, r3]
    pf, qf = float(pq), float(qq)
    sqf = math.sqrt(float(disc))
    # numerically stable quadratic roots
    t = -0.5 * (pf + math.copysign(sqf, pf))
    if t == 0:
        q1 = q2 = 0.0
    else:
        q1, q2 = t, qf / t
    q1, q2 = _polish(coeffs, q1), _polish(coeffs, q2)
    return [float(root), q1, q2], [root, None, None]


# -- betas and gammas ----------------------------------------------------------

def compute_betas(s: SpectralData, p: ModuliParams) -> SpectralData:
    c1, c2 = p.c1, p.c2
    betas = []
    for x in s.alphas:
        gap = x - float(c1)
        if abs(gap) <= ROOT_GAP_RTOL * (1 + abs(float(c1))):
            raise DegenerateRootError(f"root {x!r} equals c1 = {c1}")
        betas.append(float(c2) * x / gap)
    rational_betas = None
    if s.rational_roots is not None and is_exact(c1) and is_exact(c2):
        rational_betas = tuple(None if r is None else c2 * r / (r - c1) for r in s.rational_roots)
        betas = [float(rb) if rb is not None else b for rb, b in zip(rational_betas, betas)]
    return replace(s, betas=tuple(betas), rational_betas=rational_betas)


def gamma_radicands(alphas, frakC):
    """(C + a_k a_l) / (C (a_j - a_k)(a_j - a_l)) for j = 1..3, cyclic."""
    out = []
    for j in range(3):
        k, l = [i for i in range(3) if i != j]
        out.append((frakC + alphas[k] * alphas[l])
                   / (frakC * (alphas[j] - alphas[k]) * (alphas[j] - alphas[l])))
    return out


def gamma_identities(alphas, betas, gammas):
    """Residuals of the six sum identities behind the unitarity of the frame.

    Each residual is divided by ``max(1, sum of |terms|)``.
    """
    al = np.asarray(alphas, dtype=float)
    be = np.asarray(betas, dtype=float)
    g2 = np.asarray(gammas[:3], dtype=float) ** 2
    g4sq = float(gammas[3]) ** 2

    def res(terms, target):
        return abs(terms.sum() - target) / max(1.0, np.abs(terms).sum(), abs(target))

    return {
        "sum_g2": res(g2, g4sq),
        "sum_g2_alpha": res(g2 * al, 0.0),
        "sum_g2_alpha2": res(g2 * al * al, 1.0),
        "sum_g2_beta": res(g2 * be, 0.0),
        "sum_g2_beta2": res(g2 * be * be, 1.0),
        "sum_g2_alpha_beta": res(g2 * al * be, 0.0),
    }


def compute_gammas(s: SpectralData, d: DerivedConstants, tol: float = IDENTITY_TOL) -> SpectralData:
    """Fill gamma_1..gamma_4 and verify the six identities.

    Radicands are evaluated exactly when all roots are rational.
    """
    if s.betas is None:
        raise ValueError("compute_betas must run before compute_gammas")
    d.require_positive()
    if s.all_rational and is_exact(d.frakC):
        rads = gamma_radicands(s.rational_roots, d.frakC)
    else:
        rads = gamma_radicands([float(x) for x in s.alphas], float(d.frakC))
    gammas = []
    for j, r in enumerate(rads, start=1):
        # tiny negative values are rounding noise on an exactly-zero radicand
        if r < 0 and (is_exact(r) or r < -1e-14):
            raise NegativeRadicandError(j, r)
        gammas.append(math.sqrt(max(float(r), 0.0)))
    gammas.append(math.sqrt(1.0 / float(d.frakC)))
    residuals = gamma_identities(s.alphas, s.betas, gammas)
    for name, r in residuals.items():
        if not r <= tol:
            raise IdentityViolationError(name, r, tol)
    return replace(s, gammas=tuple(gammas), identity_residuals=residuals)


def spectral_data(p: ModuliParams, d: Optional[DerivedConstants] = None) -> SpectralData:
    """Roots, betas and gammas in one call."""
    d = d or derive_constants(p)
    s = solve_spectral_cubic(p, d)
    s = compute_betas(s, p)
    return compute_gammas(s, d)
