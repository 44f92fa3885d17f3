from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from geompot import autodiff as ad
from geompot import brackets as br
from geompot.constants import GEODESIC_SIGNS, PhysicalConstants
from geompot.errors import OffManifold, SingularConstraintMatrix, ZeroMomentum
from geompot.surface import ImplicitSurface, curvature_at, cylinder, ellipsoid, plane, sphere, torus

SURFACES = [sphere(), cylinder(), torus(), ellipsoid()]
X = [br.position(i) for i in range(3)]
P = [br.momentum(i) for i in range(3)]
G = [br.angular_momentum(i) for i in range(3)]


def _pool():
    """Small expression pool for random observables."""
    return [
        X[0], X[1], X[2], P[0], P[1], P[2], G[2],
        br.Observable.from_function(lambda x, p: ad.sin(x[0]) * p[1] + x[2] * x[2], "s"),
        br.Observable.from_function(lambda x, p: ad.exp(0.3 * x[1]) * p[0] * p[2], "e"),
        br.Observable.from_function(lambda x, p: x[0] * x[1] * p[2] - p[0] * p[0], "q"),
    ]


POOL = _pool()
obs_index = st.integers(0, len(POOL) - 1)


def test_poisson_canonical():
    pt = br.PhaseSpacePoint(np.array([0.3, -1.0, 2.0]), np.array([1.0, 0.5, -0.2]))
    for i in range(3):
        for j in range(3):
            assert br.poisson(X[i], P[j], pt) == float(i == j)
            assert br.poisson(X[i], X[j], pt) == 0.0
            assert br.poisson(P[i], P[j], pt) == 0.0


def test_from_function_derivatives_match_closed_form():
    pts = br.sample_phase_points(torus(), 20, 0)
    g_ad = br.Observable.from_function(lambda x, p: x[0] * p[1] - x[1] * p[0], "Gz")
    for a, b in zip(g_ad.derivatives(pts), G[2].derivatives(pts)):
        assert_allclose(a, b, atol=1e-14)


def test_constraint_matrix_signed_distance_sphere():
    pts = br.sample_phase_points(sphere(), 1000, 1)
    C = br.constraint_matrix(sphere(), pts).C
    assert np.max(np.abs(C - np.array([[0.0, 1.0], [-1.0, 0.0]]))) <= 1e-12


def test_constraint_matrix_ellipsoid_equals_gradient_norm():
    surf = ellipsoid()
    pts = br.sample_phase_points(surf, 100, 2)
    C = br.constraint_matrix(surf, pts)
    assert_allclose(C.c12, np.linalg.norm(surf.grad(pts.x), axis=-1), rtol=1e-14)
    assert_allclose(C.C + np.swapaxes(C.C, -1, -2), 0.0, atol=0)
    assert_allclose(np.einsum("...ij,...jk->...ik", C.C, C.inverse), np.broadcast_to(np.eye(2), C.C.shape), atol=1e-14)


def test_dirac_examples_on_sphere():
    pt = br.PhaseSpacePoint(np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    surf = sphere()
    assert br.dirac(X[0], X[1], pt, surf) == 0.0
    table = np.array([[br.dirac(X[i], P[j], pt, surf) for j in range(3)] for i in range(3)])
    assert_allclose(table, np.diag([1.0, 1.0, 0.0]), atol=1e-15)


def test_off_manifold_rejected():
    surf = sphere()
    with pytest.raises(OffManifold):
        br.dirac(X[0], P[0], br.PhaseSpacePoint([0.0, 0.0, 1.1], [1.0, 0.0, 0.0]), surf)
    with pytest.raises(OffManifold):
        br.dirac(X[0], P[0], br.PhaseSpacePoint([0.0, 0.0, 1.0], [1.0, 0.0, 0.1]), surf)


def test_singular_constraint_matrix():
    weak = ImplicitSurface.from_function(lambda v: 1e-9 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 1.0), "weak")
    pt = br.PhaseSpacePoint([0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    with pytest.raises(SingularConstraintMatrix):
        br.dirac(X[0], P[0], pt, weak)


def test_phase_point_shape_validation():
    with pytest.raises(ValueError):
        br.PhaseSpacePoint(np.zeros(3), np.zeros(2))


@pytest.mark.parametrize("surf", SURFACES)
def test_dirac_annihilates_constraints(surf):
    pts = br.sample_phase_points(surf, 300, 4)
    engine = br.DiracBracket(surf, pts)
    for a in POOL + [br.hamiltonian()]:
        for chi in engine.chi:
            assert np.max(np.abs(engine(a, chi))) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(obs_index, obs_index, obs_index, st.floats(-3, 3), st.integers(0, 3), st.integers(0, 1000))
def test_antisymmetry_and_bilinearity(ia, ib, ic, lam, si, seed):
    surf = SURFACES[si]
    pts = br.sample_phase_points(surf, 8, seed)
    engine = br.DiracBracket(surf, pts)
    a, b, c = POOL[ia], POOL[ib], POOL[ic]
    for bracket in (engine, lambda u, v: br.poisson(u, v, pts)):
        ab, ba = bracket(a, b), bracket(b, a)
        assert_allclose(ab, -ba, atol=1e-12)
        lhs = bracket(a * lam + c, b)
        rhs = lam * ab + bracket(c, b)
        assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.max(np.abs(rhs))))


@settings(max_examples=30, deadline=None)
@given(obs_index, obs_index, obs_index, st.integers(0, 3), st.integers(0, 1000))
def test_leibniz_rule(i_f, i_g, i_h, si, seed):
    surf = SURFACES[si]
    pts = br.sample_phase_points(surf, 8, seed)
    engine = br.DiracBracket(surf, pts)
    f, g, h = POOL[i_f], POOL[i_g], POOL[i_h]
    lhs = engine(f * g, h)
    rhs = f(pts) * engine(g, h) + engine(f, h) * g(pts)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * (1 + np.max(np.abs(rhs)))


def independent_eq5_rhs(surf, pts):
    """``(n_j n_{i,k} - n_i n_{j,k}) p_k`` with dn by central differences of n."""
    h = 1e-6
    x, p = pts.x, pts.p
    n = curvature_at(surf, x).n
    dn = np.empty(x.shape + (3,))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        gp, gm = surf.grad(x + e), surf.grad(x - e)
        dn[..., k] = (gp / np.linalg.norm(gp, axis=-1, keepdims=True) - gm / np.linalg.norm(gm, axis=-1, keepdims=True)) / (2 * h)
    out = np.empty(x.shape[:-1] + (3, 3))
    for i in range(3):
        for j in range(3):
            out[..., i, j] = np.einsum("...k,...k->...", n[..., j, None] * dn[..., i, :] - n[..., i, None] * dn[..., j, :], p)
    return out


@pytest.mark.parametrize("surf", SURFACES)
def test_eq5_against_independent_rhs(surf):
    pts = br.sample_phase_points(surf, 200, 9)
    engine = br.DiracBracket(surf, pts)
    lhs = np.stack([np.stack([engine(P[i], P[j]) for j in range(3)], -1) for i in range(3)], -2)
    assert_allclose(lhs, independent_eq5_rhs(surf, pts), atol=1e-7)


def test_geodesic_invariants_examples():
    pt = br.PhaseSpacePoint([0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    inv = br.geodesic_invariants(sphere(), pt)
    assert_allclose(inv.kappa, -1.0)
    assert_allclose(inv.tau, 0.0, atol=1e-15)
    pt = br.PhaseSpacePoint([0.4, 1.1, 0.0], [0.7, -0.3, 0.0])
    inv = br.geodesic_invariants(plane(), pt)
    assert inv.kappa == 0.0 and inv.tau == 0.0


def helix_oracle(R, angle):
    """Frenet curvature and torsion of the helix on a cylinder at a given pitch angle.

    The helix ``(R cos s, R sin s, c s)`` has curvature ``R/(R^2+c^2)`` and
    torsion ``c/(R^2+c^2)``; ``c = R tan(angle)``.
    """
    c = R * np.tan(angle)
    return R / (R * R + c * c), c / (R * R + c * c)


def test_cylinder_helix_invariants():
    for R, angle in ((1.0, np.pi / 4), (1.0, 0.3), (2.0, 1.0)):
        t = np.array([0.0, np.cos(angle), np.sin(angle)])
        pt = br.PhaseSpacePoint([R, 0.0, 0.0], 2.5 * t)
        inv = br.geodesic_invariants(cylinder(R), pt)
        kappa, tau = helix_oracle(R, angle)
        assert_allclose(abs(inv.kappa), kappa, rtol=1e-12)
        assert_allclose(abs(inv.tau), abs(tau), rtol=1e-12)
    inv = br.geodesic_invariants(cylinder(), br.PhaseSpacePoint([1.0, 0, 0], [0, np.sqrt(0.5), np.sqrt(0.5)]))
    assert_allclose([abs(inv.kappa), abs(inv.tau)], [0.5, 0.5], rtol=1e-12)


def test_zero_momentum():
    with pytest.raises(ZeroMomentum):
        br.geodesic_invariants(sphere(), br.PhaseSpacePoint([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]))


def test_sign_calibration_reproduces_frozen_convention():
    cal = br.calibrate_geodesic_signs()
    assert cal.convention == GEODESIC_SIGNS
    others = [r for k, r in cal.residuals.items() if k != (GEODESIC_SIGNS.kappa, GEODESIC_SIGNS.tau)]
    assert cal.residuals[(GEODESIC_SIGNS.kappa, GEODESIC_SIGNS.tau)] <= 1e-10
    assert min(others) > 1e-2


def test_sphere_reduces_to_so3():
    pts = br.sample_phase_points(sphere(), 200, 3)
    full, reduced = br.angular_momentum_bracket_check(sphere(), pts)
    assert np.max(np.abs(reduced)) <= 1e-10
    assert np.max(np.abs(full)) <= 1e-10


@pytest.mark.parametrize("surf", [torus(), ellipsoid(), torus(3.0, 1.0, (0.7, -0.4, 0.3))])
def test_deformed_algebra(surf):
    pts = br.sample_phase_points(surf, 200, 12)
    full, reduced = br.angular_momentum_bracket_check(surf, pts)
    assert np.max(np.abs(full)) <= 1e-8
    assert np.max(np.abs(reduced)) > 1e-3


def test_equations_of_motion_sphere_centripetal():
    pts = br.sample_phase_points(sphere(), 100, 5)
    c = PhysicalConstants(hbar=1.0, mu=2.0)
    eom = br.equations_of_motion(sphere(), pts, c)
    assert_allclose(eom.dx, pts.p / 2.0, atol=1e-10)
    n = pts.x
    assert_allclose(eom.dp, -n * (np.sum(pts.p**2, -1) / 2.0)[:, None], atol=1e-10)


@pytest.mark.parametrize("surf", SURFACES)
def test_torque_is_tangent(surf):
    pts = br.sample_phase_points(surf, 100, 6)
    eom = br.equations_of_motion(surf, pts)
    n = curvature_at(surf, pts.x).n
    assert np.max(np.abs(np.sum(n * eom.torque, -1))) <= 1e-10
    assert_allclose(eom.dG, eom.torque, atol=1e-10)


def test_sampler_properties():
    pts = br.sample_phase_points(sphere(), 3, 1)
    n = curvature_at(sphere(), pts.x).n
    assert np.all(np.abs(np.sum(n * pts.p, -1)) <= 1e-14 * np.linalg.norm(pts.p, axis=-1))
    again = br.sample_phase_points(sphere(), 3, 1)
    assert np.array_equal(again.x, pts.x) and np.array_equal(again.p, pts.p)
    big = br.sample_phase_points(torus(), 1000, 0)
    assert np.all(big.is_on_manifold(torus()))


@pytest.mark.parametrize("surf", SURFACES)
def test_verify_classical_passes(surf):
    checks = br.verify_classical(surf, 1000, 0)
    assert [c.identity for c in checks] == list(br.IDENTITY_IDS)
    assert all(c.passed for c in checks), br.format_classical_report(checks)


def test_verify_classical_forced_failure_and_report():
    checks = br.verify_classical(sphere(), 50, 0, tol=1e-16)
    assert not all(c.passed for c in checks)
    text = br.format_classical_report(checks)
    assert "FAIL" in text and text.splitlines()[0].startswith("identity")
    body = json.loads(br.format_classical_report(checks, "json"))
    assert set(body) == set(br.IDENTITY_IDS)
    assert body["EQ3"]["samples"] == 50
