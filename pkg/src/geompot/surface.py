"""Implicit and parametric surfaces in R^3 and their extrinsic curvature.

Curvature follows the Weingarten convention ``S = -P (grad n) P`` with the
normal ``n = grad f / |grad f|``. With an outward normal the sphere of radius
R then has principal curvatures ``-1/R`` and ``M = -2/R``. The sign of ``M``
and of ``n`` flip with ``f -> -f``; ``(M/2) n``, ``M**2``, ``K`` and the
geometric potential do not, and only those enter the quantum operators.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from . import autodiff
from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .errors import DegenerateGradient, SingularMetric

GRAD_FLOOR = 1e-8
METRIC_FLOOR = 1e-14

Field = Callable[[np.ndarray], np.ndarray]
ChartMap = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ParametricChart:
    """A map (u, v) -> R^3 with analytic first partials.

    Periodic directions are sampled at ``u0 + j h``; the others are closed
    by metric degeneracy at both ends (poles) and are sampled at the offset
    nodes ``u0 + (j + 1/2) h`` so that no node sits on a pole.
    """

    name: str
    position: ChartMap
    du: ChartMap
    dv: ChartMap
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    periodic: tuple[bool, bool]

    def nodes(self, n_u: int, n_v: int):
        """Node coordinates (u, v) of an ``n_u x n_v`` grid and spacings."""
        axes, steps = [], []
        for (a, b), per, n in zip((self.u_range, self.v_range), self.periodic, (n_u, n_v)):
            h = (b - a) / n
            offset = 0.0 if per else 0.5
            axes.append(a + (np.arange(n) + offset) * h)
            steps.append(h)
        u, v = np.meshgrid(axes[0], axes[1], indexing="ij")
        return u, v, steps[0], steps[1]

    @property
    def has_pole(self) -> bool:
        return not all(self.periodic)


def chart_metric(chart: ParametricChart, u, v):
    """Induced metric ``g_ab``, area element ``sqrt(g)`` and inverse metric.

    Raises :class:`SingularMetric` if ``det g <= 1e-14`` anywhere.
    """
    xu = chart.du(np.asarray(u, float), np.asarray(v, float))
    xv = chart.dv(np.asarray(u, float), np.asarray(v, float))
    guu = np.sum(xu * xu, axis=-1)
    guv = np.sum(xu * xv, axis=-1)
    gvv = np.sum(xv * xv, axis=-1)
    det = guu * gvv - guv**2
    if np.any(~(det > METRIC_FLOOR)):
        raise SingularMetric(f"degenerate metric on chart {chart.name!r} (min det g = {np.min(det):.3e})")
    g = np.stack([np.stack([guu, guv], -1), np.stack([guv, gvv], -1)], -2)
    ginv = np.stack([np.stack([gvv, -guv], -1), np.stack([-guv, guu], -1)], -2) / det[..., None, None]
    return g, np.sqrt(det), ginv


@dataclass(frozen=True)
class ImplicitSurface:
    """Level set ``f(x) = 0`` with gradient and Hessian closures.

    All closures are vectorized: they take points of shape ``(..., 3)``.
    """

    name: str
    f: Field
    grad: Field
    hess: Field
    params: Mapping[str, object] = field(default_factory=dict)
    chart: ParametricChart | None = None
    scale: float = 1.0
    signed_distance: bool = False
    orientation: int = 1

    @classmethod
    def from_function(
        cls,
        fn: Callable,
        name: str = "user",
        chart: ParametricChart | None = None,
        scale: float = 1.0,
        **params,
    ) -> "ImplicitSurface":
        """Wrap a scalar level function; derivatives come from forward-mode AD.

        ``fn`` receives a sequence ``(x, y, z)`` and must be written with the
        arithmetic operators and the functions in :mod:`geompot.autodiff`.
        """

        def f(x):
            return autodiff.derivatives(fn, x)[0]

        def grad(x):
            return autodiff.derivatives(fn, x)[1]

        def hess(x):
            return autodiff.derivatives(fn, x)[2]

        return cls(name, f, grad, hess, dict(params), chart, scale)

    def flipped(self) -> "ImplicitSurface":
        """The same surface described by ``-f`` (opposite normal)."""
        f, g, h = self.f, self.grad, self.hess
        return replace(
            self,
            f=lambda x: -f(x),
            grad=lambda x: -g(x),
            hess=lambda x: -h(x),
            orientation=-self.orientation,
        )


@dataclass(frozen=True)
class CurvatureSample:
    """Extrinsic geometry at one point or a batch of points.

    Array fields carry the batch shape of ``x`` in front of their own.
    ``dn[..., i, j]`` is the normal Jacobian dn_i/dx_j of the level-set
    normal field; it depends on how ``f`` extends off the surface, whereas
    ``S`` does not.
    """

    x: np.ndarray
    n: np.ndarray
    dn: np.ndarray
    P: np.ndarray
    S: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    M: np.ndarray
    K: np.ndarray
    VG: np.ndarray
    grad_norm: np.ndarray

    @property
    def half_mean_normal(self) -> np.ndarray:
        """The orientation-invariant vector (M/2) n."""
        return 0.5 * self.M[..., None] * self.n


def _unit_gradient(surface: ImplicitSurface, x):
    g = np.asarray(surface.grad(x), dtype=float)
    norm = np.linalg.norm(g, axis=-1)
    bad = ~(norm >= GRAD_FLOOR)
    if np.any(bad):
        raise DegenerateGradient(
            f"|grad f| below {GRAD_FLOOR:g} on surface {surface.name!r}"
            f" (min {np.nanmin(np.where(np.isfinite(norm), norm, 0.0)):.3e})"
        )
    return g / norm[..., None], norm


def normal(surface: ImplicitSurface, x) -> np.ndarray:
    """Unit normal ``grad f / |grad f|`` at ``x`` (shape ``(..., 3)``).

    ``x`` is expected on or very near the surface; the field is evaluated
    as is, without projection.
    """
    return _unit_gradient(surface, np.asarray(x, dtype=float))[0]


def _tangent_frame(n):
    # second vector: coordinate axis least aligned with n, projected
    axis = np.argmin(np.abs(n), axis=-1)
    a = np.zeros_like(n)
    np.put_along_axis(a, axis[..., None], 1.0, axis=-1)
    e1 = a - np.sum(a * n, axis=-1, keepdims=True) * n
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(n, e1)
    return e1, e2


def curvature_at(
    surface: ImplicitSurface,
    x,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> CurvatureSample:
    """Normal, shape operator, principal/mean/Gaussian curvature and V_G."""
    x = np.asarray(x, dtype=float)
    n, gnorm = _unit_gradient(surface, x)
    H = np.asarray(surface.hess(x), dtype=float)
    eye = np.eye(3)
    P = eye - n[..., :, None] * n[..., None, :]
    dn = P @ H / gnorm[..., None, None]
    S = -(dn @ P)

    e1, e2 = _tangent_frame(n)
    Se1 = np.einsum("...ij,...j->...i", S, e1)
    Se2 = np.einsum("...ij,...j->...i", S, e2)
    a = np.sum(e1 * Se1, axis=-1)
    d = np.sum(e2 * Se2, axis=-1)
    b = 0.5 * (np.sum(e1 * Se2, axis=-1) + np.sum(e2 * Se1, axis=-1))

    M = np.trace(S, axis1=-2, axis2=-1)
    K = 0.5 * (M**2 - np.trace(S @ S, axis1=-2, axis2=-1))
    # ((k1 - k2)/2)^2; below the rounding floor of the 2x2 entries it is noise
    disc = 0.25 * (a - d) ** 2 + b**2
    floor = (64 * np.finfo(float).eps * (np.abs(a) + np.abs(d) + np.abs(b))) ** 2
    disc = np.where(disc <= floor, 0.0, disc)
    root = np.sqrt(disc)
    half = 0.5 * (a + d)
    VG = -constants.kinetic * disc + 0.0
    return CurvatureSample(
        x=x,
        n=n,
        dn=dn,
        P=P,
        S=S,
        k1=half - root,
        k2=half + root,
        M=M,
        K=K,
        VG=VG,
        grad_norm=gnorm,
    )


def geometric_potential(M, K, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """``-hbar^2/(2 mu) * ((M/2)^2 - K)`` from curvature values."""
    return -constants.kinetic * (0.25 * np.asarray(M) ** 2 - np.asarray(K))


def sample_surface_points(surface: ImplicitSurface, count: int, seed: int) -> np.ndarray:
    """Deterministic on-surface points: uniform chart draw plus one Newton step."""
    if count < 1:
        raise ValueError("count must be >= 1")
    chart = surface.chart
    if chart is None:
        raise ValueError(f"surface {surface.name!r} has no chart to sample from")
    rng = np.random.default_rng(seed)
    u = rng.uniform(*chart.u_range, size=count)
    v = rng.uniform(*chart.v_range, size=count)
    x = chart.position(u, v)
    g = surface.grad(x)
    x = x - (surface.f(x) / np.sum(g * g, axis=-1))[:, None] * g
    return x


# -- built-in surfaces -------------------------------------------------------


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def sphere(radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> ImplicitSurface:
    """Signed-distance sphere ``|x - c| - R``; chart (theta, phi)."""
    R = float(radius)
    c = np.asarray(center, dtype=float)

    def f(x):
        return np.linalg.norm(x - c, axis=-1) - R

    def grad(x):
        y = x - c
        return y / np.linalg.norm(y, axis=-1, keepdims=True)

    def hess(x):
        y = x - c
        r = np.linalg.norm(y, axis=-1)
        n = y / r[..., None]
        return (np.eye(3) - n[..., :, None] * n[..., None, :]) / r[..., None, None]

    chart = ParametricChart(
        "sphere",
        position=lambda t, p: c + R * _stack(np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)),
        du=lambda t, p: R * _stack(np.cos(t) * np.cos(p), np.cos(t) * np.sin(p), -np.sin(t)),
        dv=lambda t, p: R * _stack(-np.sin(t) * np.sin(p), np.sin(t) * np.cos(p), 0.0 * t),
        u_range=(0.0, np.pi),
        v_range=(0.0, 2 * np.pi),
        periodic=(False, True),
    )
    return ImplicitSurface("sphere", f, grad, hess, {"radius": R, "center": c.tolist()}, chart, R, True)


def cylinder(radius: float = 1.0, period: float = 2 * np.pi) -> ImplicitSurface:
    """Circular cylinder about the z axis, periodic in z with the given period."""
    R = float(radius)
    L = float(period)

    def f(x):
        return np.hypot(x[..., 0], x[..., 1]) - R

    def grad(x):
        rho = np.hypot(x[..., 0], x[..., 1])
        return _stack(x[..., 0] / rho, x[..., 1] / rho, 0.0 * rho)

    def hess(x):
        rho = np.hypot(x[..., 0], x[..., 1])
        ephi = _stack(-x[..., 1] / rho, x[..., 0] / rho, 0.0 * rho)
        return ephi[..., :, None] * ephi[..., None, :] / rho[..., None, None]

    chart = ParametricChart(
        "cylinder",
        position=lambda p, z: _stack(R * np.cos(p), R * np.sin(p), z),
        du=lambda p, z: _stack(-R * np.sin(p), R * np.cos(p), 0.0 * z),
        dv=lambda p, z: _stack(0.0 * p, 0.0 * p, 1.0 + 0.0 * z),
        u_range=(0.0, 2 * np.pi),
        v_range=(0.0, L),
        periodic=(True, True),
    )
    return ImplicitSurface("cylinder", f, grad, hess, {"radius": R, "period": L}, chart, R, True)


def torus(R: float = 2.0, r: float = 0.5, center=(0.0, 0.0, 0.0)) -> ImplicitSurface:
    """Torus about the z axis through ``center``, in signed-distance form.

    Chart: ``u`` runs around the symmetry axis, ``v`` around the tube, with
    ``v = 0`` on the outer equator.
    """
    R, r = float(R), float(r)
    if not 0 < r < R:
        raise ValueError("torus requires 0 < r < R")
    c = np.asarray(center, dtype=float)

    def _parts(x):
        y = x - c
        rho = np.hypot(y[..., 0], y[..., 1])
        erho = _stack(y[..., 0] / rho, y[..., 1] / rho, 0.0 * rho)
        ephi = _stack(-y[..., 1] / rho, y[..., 0] / rho, 0.0 * rho)
        s = np.hypot(rho - R, y[..., 2])
        return y, rho, erho, ephi, s

    def f(x):
        y, rho, _, _, s = _parts(x)
        return s - r

    def grad(x):
        y, rho, erho, _, s = _parts(x)
        return ((rho - R) / s)[..., None] * erho + (y[..., 2] / s)[..., None] * np.array([0.0, 0.0, 1.0])

    def hess(x):
        y, rho, erho, ephi, s = _parts(x)
        ez = np.broadcast_to(np.array([0.0, 0.0, 1.0]), erho.shape)
        # unit tangent of the meridian circle
        m = (y[..., 2] / s)[..., None] * erho - ((rho - R) / s)[..., None] * ez
        out = m[..., :, None] * m[..., None, :] / s[..., None, None]
        out = out + (((rho - R) / s) / rho)[..., None, None] * (ephi[..., :, None] * ephi[..., None, :])
        return out

    chart = ParametricChart(
        "torus",
        position=lambda u, v: c
        + _stack((R + r * np.cos(v)) * np.cos(u), (R + r * np.cos(v)) * np.sin(u), r * np.sin(v)),
        du=lambda u, v: _stack(-(R + r * np.cos(v)) * np.sin(u), (R + r * np.cos(v)) * np.cos(u), 0.0 * u),
        dv=lambda u, v: _stack(-r * np.sin(v) * np.cos(u), -r * np.sin(v) * np.sin(u), r * np.cos(v)),
        u_range=(0.0, 2 * np.pi),
        v_range=(0.0, 2 * np.pi),
        periodic=(True, True),
    )
    return ImplicitSurface("torus", f, grad, hess, {"R": R, "r": r, "center": c.tolist()}, chart, r, True)


def ellipsoid(a: float = 2.0, b: float = 1.0, c: float = 1.0) -> ImplicitSurface:
    """Axis-aligned ellipsoid ``x^2/a^2 + y^2/b^2 + z^2/c^2 - 1`` (not a distance)."""
    axes = np.array([a, b, c], dtype=float)
    inv2 = 1.0 / axes**2

    def f(x):
        return np.sum(x * x * inv2, axis=-1) - 1.0

    def grad(x):
        return 2.0 * x * inv2

    def hess(x):
        return np.broadcast_to(np.diag(2.0 * inv2), x.shape + (3,)).copy()

    chart = ParametricChart(
        "ellipsoid",
        position=lambda t, p: _stack(a * np.sin(t) * np.cos(p), b * np.sin(t) * np.sin(p), c * np.cos(t)),
        du=lambda t, p: _stack(a * np.cos(t) * np.cos(p), b * np.cos(t) * np.sin(p), -c * np.sin(t)),
        dv=lambda t, p: _stack(-a * np.sin(t) * np.sin(p), b * np.sin(t) * np.cos(p), 0.0 * t),
        u_range=(0.0, np.pi),
        v_range=(0.0, 2 * np.pi),
        periodic=(False, True),
    )
    return ImplicitSurface(
        "ellipsoid", f, grad, hess, {"a": float(a), "b": float(b), "c": float(c)}, chart, float(min(axes))
    )


def plane(period: float = 2 * np.pi) -> ImplicitSurface:
    """The plane z = 0 with a doubly periodic chart of side ``period``."""
    L = float(period)

    def f(x):
        return x[..., 2].copy()

    def grad(x):
        return np.broadcast_to(np.array([0.0, 0.0, 1.0]), x.shape).copy()

    def hess(x):
        return np.zeros(x.shape + (3,))

    chart = ParametricChart(
        "plane",
        position=lambda u, v: _stack(u, v, 0.0 * u),
        du=lambda u, v: _stack(1.0 + 0.0 * u, 0.0 * u, 0.0 * u),
        dv=lambda u, v: _stack(0.0 * u, 1.0 + 0.0 * v, 0.0 * u),
        u_range=(0.0, L),
        v_range=(0.0, L),
        periodic=(True, True),
    )
    return ImplicitSurface("plane", f, grad, hess, {"period": L}, chart, 1.0, True)


BUILTINS: dict[str, Callable[..., ImplicitSurface]] = {
    "sphere": sphere,
    "cylinder": cylinder,
    "torus": torus,
    "ellipsoid": ellipsoid,
    "plane": plane,
}


def make_surface(name: str, **params) -> ImplicitSurface:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown surface {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)


# -- export ------------------------------------------------------------------

CURVATURE_COLUMNS = ("u", "v", "x", "y", "z", "nx", "ny", "nz", "M", "K", "VG")


def curvature_table(
    surface: ImplicitSurface,
    n_u: int,
    n_v: int,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Rows ``u, v, x, y, z, nx, ny, nz, M, K, VG`` over the chart grid nodes."""
    if surface.chart is None:
        raise ValueError(f"surface {surface.name!r} has no chart")
    u, v, _, _ = surface.chart.nodes(n_u, n_v)
    x = surface.chart.position(u, v)
    cs = curvature_at(surface, x, constants)
    cols = [u, v, x[..., 0], x[..., 1], x[..., 2], cs.n[..., 0], cs.n[..., 1], cs.n[..., 2], cs.M, cs.K, cs.VG]
    return np.stack([np.ravel(col) for col in cols], axis=-1)


def format_curvature_table(rows: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVATURE_COLUMNS)
    for row in rows:
        writer.writerow([f"{val + 0.0:.16e}" for val in row])
    return buf.getvalue()
