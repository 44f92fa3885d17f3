"""Structured chart grids with quadrature weights and per-node curvature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..constants import DEFAULT_CONSTANTS, PhysicalConstants
from ..errors import SingularMetric
from ..surface import CurvatureSample, ImplicitSurface, ParametricChart, chart_metric, curvature_at

SQRTG_FLOOR = 1e-10


@dataclass(frozen=True)
class Faces:
    """Node pairs (lo, hi) adjacent along one chart axis, with face midpoints."""

    axis: int
    lo: np.ndarray
    hi: np.ndarray
    u: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class SurfaceGrid:
    """Node-centred grid on a chart; arrays are flattened in (u, v) C order."""

    surface: ImplicitSurface
    chart: ParametricChart
    n_u: int
    n_v: int
    h_u: float
    h_v: float
    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    curvature: CurvatureSample
    sqrtg: np.ndarray
    weights: np.ndarray
    constants: PhysicalConstants

    @property
    def size(self) -> int:
        return self.n_u * self.n_v

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_u, self.n_v

    @property
    def spacing(self) -> float:
        """Representative mesh width used for convergence fits."""
        return max(self.h_u, self.h_v)

    @property
    def pole_offset(self) -> bool:
        return self.chart.has_pole

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    def faces(self, axis: int) -> Faces:
        n = (self.n_u, self.n_v)
        idx = np.arange(self.size).reshape(n)
        if self.chart.periodic[axis]:
            hi = np.roll(idx, -1, axis=axis)
            lo = idx
        else:
            # closing faces sit on poles where the flux weight vanishes
            sl_lo = [slice(None), slice(None)]
            sl_hi = [slice(None), slice(None)]
            sl_lo[axis] = slice(0, -1)
            sl_hi[axis] = slice(1, None)
            lo, hi = idx[tuple(sl_lo)], idx[tuple(sl_hi)]
        lo, hi = lo.ravel(), hi.ravel()
        u, v = self.u[lo].copy(), self.v[lo].copy()
        if axis == 0:
            u += 0.5 * self.h_u
        else:
            v += 0.5 * self.h_v
        return Faces(axis, lo, hi, u, v)

    def inner(self, a, b) -> float:
        """The quadrature inner product sum(w a b)."""
        return float(np.sum(self.weights * a * b))

    def norm(self, a) -> float:
        return float(np.sqrt(np.sum(self.weights * np.asarray(a) ** 2)))


def build_grid(
    surface: ImplicitSurface,
    n_u: int,
    n_v: int,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> SurfaceGrid:
    """Nodes, weights ``sqrt(g) h_u h_v`` and curvature samples on the chart."""
    chart = surface.chart
    if chart is None:
        raise ValueError(f"surface {surface.name!r} has no chart")
    if n_u < 2 or n_v < 2:
        raise ValueError("grid needs at least 2 nodes per direction")
    u, v, h_u, h_v = chart.nodes(n_u, n_v)
    u, v = u.ravel(), v.ravel()
    _, sqrtg, _ = chart_metric(chart, u, v)
    if np.any(sqrtg < SQRTG_FLOOR):
        raise SingularMetric("grid node with vanishing area element")
    x = chart.position(u, v)
    curv = curvature_at(surface, x, constants)
    return SurfaceGrid(
        surface=surface,
        chart=chart,
        n_u=n_u,
        n_v=n_v,
        h_u=h_u,
        h_v=h_v,
        u=u,
        v=v,
        x=x,
        curvature=curv,
        sqrtg=sqrtg,
        weights=sqrtg * h_u * h_v,
        constants=constants,
    )
