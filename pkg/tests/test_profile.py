import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from hml_tori.errors import MultipleRootError, NoOscillationError
from hml_tori.profile import (
    ProfileSolution,
    compute_period,
    energy_residual,
    find_turning_points,
    integrate_profile_ode,
    ode_return_period,
    oscillation_exists,
    quartic,
    quintic_residual,
    second_order_residual,
    solve_profile,
)


@pytest.fixture(scope="module")
def ref_profile():
    return solve_profile(6.0, 1.0)


# -- existence and turning points ------------------------------------------------------

def test_oscillation_examples():
    assert oscillation_exists(6, 1)
    # c3^2 = 27 C^4 / 256 sits exactly on the boundary
    assert not oscillation_exists(4, math.sqrt(27 * 4 ** 4 / 256))
    assert not oscillation_exists(6, 0)
    assert not oscillation_exists(-1, 1)


def _negative_roots_of_quintic_factor(frakC, c3):
    # q (256 c3^2 q^4 + 4 C q + 1): count negative simple real roots of the quartic
    r = np.roots([256 * c3 ** 2, 0, 0, 4 * frakC, 1])
    real = r[np.abs(r.imag) < 1e-9 * np.abs(r).max()].real
    return int(np.sum(real < 0))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.2, 20), st.floats(0.01, 1.99))
def test_threshold_matches_quintic_root_count(frakC, ratio):
    crit = math.sqrt(27 * frakC ** 4 / 256)
    c3 = ratio * crit
    if abs(ratio - 1) < 1e-3:
        return
    expected = _negative_roots_of_quintic_factor(frakC, c3) == 2
    assert oscillation_exists(frakC, c3) == expected


def _bisect(f, lo, hi, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.sign(f(mid)) == np.sign(f(lo)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_reference_turning_points():
    t = find_turning_points(6.0, 1.0)
    f = lambda s: quartic(s, 6.0, 1.0)  # noqa: E731
    assert abs(t.s_min - _bisect(f, 0.0, 4.5)) < 1e-14
    assert abs(t.s_max - _bisect(f, 4.5, 6.0)) < 1e-13
    assert abs(t.s_min - 0.5689) < 1e-3 and abs(t.s_max - 5.99537) < 1e-4


def test_near_critical_multiple_root():
    frakC = 6.0
    c3 = math.sqrt(27 * frakC ** 4 / 256) * (1 - 1e-20)
    with pytest.raises((MultipleRootError, NoOscillationError)):
        find_turning_points(frakC, c3)


def test_period_requires_oscillation():
    t = find_turning_points(6.0, 1.0)
    with pytest.raises(NoOscillationError):
        compute_period(t, 6.0, 0.0)
    with pytest.raises(NoOscillationError):
        solve_profile(6.0, 0.0)


# -- period ----------------------------------------------------------------------------

def test_period_orientation_independent():
    t = find_turning_points(6.0, 1.0)
    fwd = compute_period(t, 6.0, 1.0)
    rev = compute_period(t, 6.0, 1.0, reverse=True)
    assert abs(fwd - rev) <= 1e-13 * fwd


def _scipy_period(frakC, c3):
    t = find_turning_points(frakC, c3)

    def rhs(z, y):
        return [y[1], -math.exp(2 * y[0]) + 3 * c3 ** 2 * math.exp(-6 * y[0])]

    ev = lambda z, y: y[1]  # noqa: E731
    sol = solve_ivp(rhs, (0, 100), [t.u_min, 0.0], method="DOP853", rtol=1e-13, atol=1e-14,
                    events=ev, dense_output=True)
    zs = sol.t_events[0]
    zs = zs[zs > 1e-6]
    return zs[1]  # the second zero of u' after the start


@pytest.mark.parametrize("frakC,c3", [(6.0, 1.0), (4.0, 0.5), (4.0, 3.0), (1.3, 0.05)])
def test_period_against_scipy_oracle(frakC, c3):
    t = find_turning_points(frakC, c3)
    tau = compute_period(t, frakC, c3)
    assert abs(tau - _scipy_period(frakC, c3)) < 1e-8 * tau


def test_period_against_own_integrator(ref_profile):
    assert abs(ref_profile.tau - ode_return_period(6.0, 1.0)) < 1e-8
    assert abs(ref_profile.tau - 1.718622815866053) < 1e-10


# -- the sampled solution -------------------------------------------------------------

def test_energy_conserved_ten_periods(ref_profile):
    z = np.linspace(0, 10 * ref_profile.tau, 20001)
    assert energy_residual(ref_profile, z) < 1e-10


def test_second_order_and_quintic(ref_profile):
    assert second_order_residual(ref_profile) < 1e-6
    z = np.linspace(0, ref_profile.tau, 5001)
    assert quintic_residual(ref_profile, z) < 1e-8


def test_minimum_at_origin(ref_profile):
    u, du, _ = ref_profile.evaluate(0.0)
    assert abs(u - ref_profile.turning.u_min) < 1e-13
    assert abs(du) < 1e-10
    u_half, _, _ = ref_profile.evaluate(ref_profile.tau / 2)
    assert abs(u_half - ref_profile.turning.u_max) < 1e-9


def test_reflection_symmetry(ref_profile):
    z = np.linspace(0, ref_profile.tau, 301)
    up, dup, _ = ref_profile.evaluate(z)
    um, dum, _ = ref_profile.evaluate(-z)
    assert np.max(np.abs(up - um)) < 1e-10
    assert np.max(np.abs(dup + dum)) < 1e-9


def test_periodic_evaluation(ref_profile):
    z = np.linspace(-0.3, 0.7, 57)
    for k in (-3, 1, 5):
        a = np.column_stack(ref_profile.evaluate(z))
        b = np.column_stack(ref_profile.evaluate(z + k * ref_profile.tau))
        assert np.max(np.abs(a - b)) < 1e-9


def test_corrupted_samples_detected(ref_profile):
    u = ref_profile.u.copy()
    u[100] += 1e-6
    bad = ProfileSolution(ref_profile.frakC, ref_profile.c3, ref_profile.turning, ref_profile.tau,
                          ref_profile.z, u, ref_profile.du)
    z = np.linspace(0, ref_profile.tau, 20001)
    assert energy_residual(bad, z) > 1e-6
    assert second_order_residual(bad) > 1e-3


def test_serialization_roundtrip(ref_profile):
    back = ProfileSolution.from_dict(ref_profile.to_dict())
    z = np.linspace(0, 3, 41)
    assert np.array_equal(np.column_stack(back.evaluate(z)), np.column_stack(ref_profile.evaluate(z)))


def test_gap_matches_definition(ref_profile):
    z = np.linspace(0, ref_profile.tau, 77)
    u, _, _ = ref_profile.evaluate(z)
    assert np.max(np.abs(ref_profile.gap(z) - (6.0 - np.exp(2 * u)))) < 1e-11


# -- c3 = 0 closed form ---------------------------------------------------------------

@pytest.mark.parametrize("frakC", [1.0, 6.0, 0.3])
def test_c3_zero_sech_oracle(frakC):
    delta = 1e-3
    r = math.sqrt(frakC)
    z0 = math.acosh(math.exp(delta))  # sech(z0) = e^{-delta}
    u0 = 0.5 * math.log(frakC) - delta
    du0 = -r * math.tanh(z0)
    z = np.linspace(0, 5 / r, 201)
    u, du = integrate_profile_ode(frakC, 0.0, u0, du0, z)
    exact = np.log(r / np.cosh(r * z + z0))
    assert np.max(np.abs(u - exact)) < 1e-8
