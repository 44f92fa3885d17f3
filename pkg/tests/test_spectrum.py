from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from geompot.constants import PhysicalConstants
from geompot.errors import NoConvergence
from geompot.quantize import operators as ops
from geompot.quantize.grid import build_grid
from geompot.quantize.spectrum import cluster_eigenvalues, format_spectrum, spectrum
from geompot.surface import cylinder, plane, sphere, torus

SPHERE_EXACT = np.array([0, 1, 1, 1, 3, 3, 3, 3, 3], float)


def test_sphere_spectrum_and_degeneracy():
    g = build_grid(sphere(), 64, 128)
    res = spectrum(ops.hamiltonian(g), 9)
    assert res.max_residual <= 1e-8
    assert_allclose(res.eigenvalues, SPHERE_EXACT, rtol=2e-3, atol=1e-10)
    clusters = cluster_eigenvalues(res.eigenvalues, gap=1e-2)
    assert [m for _, m in clusters] == [1, 3, 5]
    assert_allclose([c for c, _ in clusters], [0, 1, 3], rtol=2e-3, atol=1e-10)


def test_sphere_spectrum_radius_and_constants():
    R = 2.0
    c = PhysicalConstants(hbar=1.5, mu=0.5)
    g = build_grid(sphere(R), 64, 128, c)
    res = spectrum(ops.hamiltonian(g), 4, energy_scale=c.kinetic / R**2)
    l1 = c.hbar**2 * 2 / (2 * c.mu * R**2)
    assert_allclose(res.eigenvalues[1:], l1, rtol=2e-3)


def test_flat_spectrum():
    g = build_grid(plane(), 32, 32)
    res = spectrum(ops.hamiltonian(g), 5)
    assert_allclose(res.eigenvalues[0], 0.0, atol=1e-10)
    assert_allclose(res.eigenvalues[1:], 0.5, rtol=5e-3)


def test_cylinder_ground_state():
    for n in (16, 32):
        res = spectrum(ops.hamiltonian(build_grid(cylinder(), n, n)), 1)
        assert_allclose(res.eigenvalues[0], -0.125, rtol=1e-10)


def test_lower_bound_and_monotonicity():
    g = build_grid(torus(), 32, 32)
    with_vg = spectrum(ops.hamiltonian(g, True), 4)
    without = spectrum(ops.hamiltonian(g, False), 4)
    assert with_vg.eigenvalues[0] >= np.min(g.curvature.VG) - 1e-8
    assert with_vg.eigenvalues[0] < without.eigenvalues[0]
    assert np.all(with_vg.eigenvalues <= without.eigenvalues + 1e-10)


def test_deterministic_given_seed():
    g = build_grid(torus(), 24, 24)
    a = spectrum(ops.hamiltonian(g), 4, seed=3)
    b = spectrum(ops.hamiltonian(g), 4, seed=3)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert format_spectrum(a) == format_spectrum(b)
    assert format_spectrum(a).splitlines()[0] == "index,eigenvalue,residual"


def test_eigenvectors_are_w_orthonormal():
    g = build_grid(torus(), 16, 16)
    res = spectrum(ops.hamiltonian(g), 3, vectors=True)
    V = res.eigenvectors
    gram = V.T @ (g.weights[:, None] * V)
    assert_allclose(gram, np.eye(3), atol=1e-10)
    H = ops.hamiltonian(g).matrix
    assert_allclose(H @ V, V * res.eigenvalues, atol=1e-8)


def test_errors():
    g = build_grid(torus(), 8, 8)
    with pytest.raises(ValueError):
        spectrum(ops.hamiltonian(g), 17)
    with pytest.raises(ValueError):
        spectrum(ops.geometric_momentum(g, 0), 2)
    with pytest.raises(NoConvergence):
        spectrum(ops.hamiltonian(g), 2, tol=1e-300)


def test_cluster_eigenvalues():
    assert cluster_eigenvalues([0.0, 1.0, 1.001, 0.999, 3.0], 0.01) == [(0.0, 1), (1.0, 3), (3.0, 1)]
    assert [m for _, m in cluster_eigenvalues([1.0, 1.0 + 1e-6], 1e-7, relative=False)] == [1, 1]
    assert len(cluster_eigenvalues([1.0, 2.0], 0.1)) == 2
