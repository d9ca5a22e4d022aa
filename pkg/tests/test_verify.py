from dataclasses import replace

import numpy as np
import pytest

from hml_tori.immersion import Connection, build_connection, xy_periods
from hml_tori.verify import (
    CertificationConfig,
    ScalarField,
    certify_harmonic_angle,
    certify_periodicity,
    certify_pointwise,
    certify_reduced_system,
    certify_zero_curvature,
    convergence_orders,
    fd_first,
    linear_angle,
    profile_field,
    psi_near,
    run_certification,
    zero_curvature_residuals,
)

SMALL = CertificationConfig(n_points=200, n_reduced=40, n_connection=32)


@pytest.fixture(scope="module")
def pts():
    return np.random.default_rng(17).uniform(-8, 8, size=(120, 3))


def test_reference_all_pass(reference):
    report = run_certification(reference, SMALL)
    assert report.overall, report.to_text()
    names = {r.name for r in report.records}
    assert {"norm", "det_frame", "zero_curvature", "reduced_system", "harmonic_angle"} <= names


def test_empty_point_set_is_vacuous(reference):
    report = run_certification(reference, CertificationConfig(n_points=0))
    assert all(r.verdict == "vacuous" for r in report.records)
    assert not report.overall


def test_seed_determinism(reference):
    a = run_certification(reference, replace(SMALL, seed=3)).to_json()
    b = run_certification(reference, replace(SMALL, seed=3)).to_json()
    c = run_certification(reference, replace(SMALL, seed=4)).to_json()
    assert a == b and a != c


# -- mutations must be caught --------------------------------------------------------

def test_perturbed_gamma_flags_norm(reference, pts):
    g = list(reference.spectral.gammas)
    g[0] *= 1 + 1e-3
    bad = replace(reference, spectral=replace(reference.spectral, gammas=tuple(g)))
    recs = {r.name: r for r in certify_pointwise(bad, pts)}
    assert not recs["norm"].passed


def test_inconsistent_W_flags_curvature(reference, pts):
    def skewed(d, z):
        c = build_connection(d, z)
        W = c.W0.copy()
        W[..., 1, 1] *= 1.001
        W[..., 3, 3] *= 1.001
        W[..., 2, 2] = -(W[..., 1, 1] + W[..., 3, 3])  # stays trace-free and skew
        return Connection(c.U0, c.V0, W)

    good = zero_curvature_residuals(reference, pts[:32])
    bad = zero_curvature_residuals(reference, pts[:32], connection=skewed)
    assert good.max() < 1e-8
    assert bad.max() > 1e-4
    assert not all(r.passed for r in certify_zero_curvature(reference, pts[:32], connection=skewed))


def test_nonharmonic_angle_flagged(reference, pts):
    quad = ScalarField(value=lambda x, y, z: x ** 2,
                       grad=lambda x, y, z: (2 * x, np.zeros_like(x), np.zeros_like(x)),
                       laplacian=lambda x, y, z: np.full(np.shape(x), 2.0))
    assert certify_harmonic_angle(reference, pts).passed
    assert not certify_harmonic_angle(reference, pts, angle=quad).passed


def test_x_dependent_conformal_factor_flagged(reference, pts):
    base = profile_field(reference)
    tilted = ScalarField(
        value=lambda x, y, z: base.value(x, y, z) + 0.1 * x,
        grad=lambda x, y, z: (np.full(np.shape(x), 0.1),) + tuple(base.grad(x, y, z)[1:]),
        laplacian=base.laplacian,
    )
    assert not certify_harmonic_angle(reference, pts, conformal=tilted).passed


def test_wrong_profile_flags_reduced_system(reference, pts):
    prof = reference.profile
    bad_prof = replace(prof, c3=prof.c3 * (1 + 1e-4))
    bad = replace(reference, profile=bad_prof)
    assert certify_reduced_system(reference, pts[:20]).passed
    assert not certify_reduced_system(bad, pts[:20]).passed


# -- finite-difference convergence ------------------------------------------------------

def test_second_order_convergence_of_curvature(reference, pts):
    hs = [1e-2, 1e-3, 1e-4]
    r, orders = convergence_orders(
        lambda h: zero_curvature_residuals(reference, pts[:16], h, fd_order=2).max(), hs)
    assert all(1.8 < o < 2.2 for o in orders), (r, orders)


def test_second_order_convergence_of_derivatives(reference, pts):
    from hml_tori.immersion import psi_jet
    p = pts[:16]
    g = psi_near(reference, p)
    exact = psi_jet(reference, *p.T).psi_z

    def err(h):
        return np.max(np.abs(fd_first(g, len(p), 2, h, order=2) - exact))

    r, orders = convergence_orders(err, [1e-2, 1e-3])
    assert all(1.8 < o < 2.2 for o in orders), (r, orders)


# -- closure ------------------------------------------------------------------------------

def test_periodicity_generic_point_fails(rational_point, pts):
    rec = certify_periodicity(rational_point, 1, xy_periods(rational_point.spectral), pts[:50])
    assert rec.detail["z"] > 1e-2 and not rec.passed
    assert rec.detail["x"] < 1e-6 and rec.detail["y"] < 1e-6


def test_periodicity_candidate_passes(torus, torus_candidate, pts):
    rec = certify_periodicity(torus, torus_candidate.n, xy_periods(torus.spectral), pts[:50])
    assert rec.passed and rec.max_residual < 1e-6


def test_candidate_full_certification(torus, torus_candidate):
    report = run_certification(torus, replace(SMALL, closure_n=torus_candidate.n))
    assert report.overall, report.to_text()
