from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from geompot import autodiff as ad

finite = st.floats(-2.0, 2.0, allow_nan=False)


def test_polynomial_gradient_and_hessian():
    value, grad, hess = ad.derivatives(lambda v: v[0] * v[0] * v[1] + 3.0 * v[1], np.array([1.5, -2.0]))
    assert_allclose(value, 1.5**2 * -2.0 - 6.0)
    assert_allclose(grad, [2 * 1.5 * -2.0, 1.5**2 + 3.0])
    assert_allclose(hess, [[-4.0, 3.0], [3.0, 0.0]])


def test_batched_evaluation_matches_pointwise():
    pts = np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [2.0, 0.0, -0.7]])
    fn = lambda v: ad.sin(v[0]) * ad.exp(v[1]) + v[2] ** 3  # noqa: E731
    batched = ad.derivatives(fn, pts)
    for i, p in enumerate(pts):
        single = ad.derivatives(fn, p)
        for a, b in zip(batched, single):
            assert_allclose(a[i], b, rtol=1e-14)


def test_quotient_and_sqrt_against_closed_form():
    x = np.array([0.7, 1.3])
    value, grad, hess = ad.derivatives(lambda v: ad.sqrt(v[0] * v[0] + v[1] * v[1]), x)
    r = np.hypot(*x)
    n = x / r
    assert_allclose(value, r)
    assert_allclose(grad, n)
    assert_allclose(hess, (np.eye(2) - np.outer(n, n)) / r, rtol=1e-13)
    _, g2, _ = ad.derivatives(lambda v: v[0] / v[1], x)
    assert_allclose(g2, [1 / x[1], -x[0] / x[1] ** 2])


@settings(max_examples=60, deadline=None)
@given(finite, finite, finite)
def test_hessian_matches_central_difference_of_gradient(a, b, c):
    x = np.array([a, b, c])
    fn = lambda v: ad.tanh(v[0] * v[1]) + ad.cos(v[2]) * v[0] + ad.log(2.0 + v[1] * v[1])  # noqa: E731
    _, _, hess = ad.derivatives(fn, x)
    h = 1e-5
    fd = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd[:, j] = (ad.derivatives(fn, x + e)[1] - ad.derivatives(fn, x - e)[1]) / (2 * h)
    assert_allclose(hess, fd, atol=1e-7)
    assert_allclose(hess, hess.T, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(finite, finite)
def test_product_rule(a, b):
    x = np.array([a, b])
    f = lambda v: ad.sin(v[0]) + v[1]  # noqa: E731
    g = lambda v: v[0] * v[1] + 1.0  # noqa: E731
    _, gf, _ = ad.derivatives(f, x)
    _, gg, _ = ad.derivatives(g, x)
    vf, vg = ad.derivatives(f, x)[0], ad.derivatives(g, x)[0]
    _, gfg, _ = ad.derivatives(lambda v: f(v) * g(v), x)
    assert_allclose(gfg, vf * gg + vg * gf, atol=1e-12)
