"""Sparse surface operators on a :class:`SurfaceGrid`.

Every quantum operator here is a real matrix; the physical operator is that
matrix times a known factor (``p_i = -i hbar D_i``, ``H`` real). Hermiticity
of the physical operator becomes symmetry or skew-symmetry of the real one
with respect to the quadrature inner product ``<a, b> = sum(w a b)``.

Assembly is face based. For a chart direction ``a`` the flux coefficient at
the face between two neighbouring nodes is evaluated analytically at the
face midpoint. Faces on a pole carry ``sqrt(g) = 0`` and are simply absent,
so the pole needs no ghost nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..constants import PhysicalConstants
from ..surface import chart_metric
from .grid import SurfaceGrid

ORTHOGONALITY_TOL = 1e-12

SELF_ADJOINT = "self_adjoint"
SKEW_ADJOINT = "skew_adjoint"
GENERAL = "general"


@dataclass(frozen=True)
class DiscreteOperator:
    """A sparse real operator together with its declared w-adjointness."""

    matrix: sp.csr_matrix
    weights: np.ndarray
    kind: str = GENERAL
    name: str = ""

    def __call__(self, psi):
        return self.matrix @ psi

    def __matmul__(self, other):
        if isinstance(other, DiscreteOperator):
            return DiscreteOperator((self.matrix @ other.matrix).tocsr(), self.weights, GENERAL)
        return self.matrix @ other

    @property
    def shape(self):
        return self.matrix.shape

    def adjoint(self) -> sp.csr_matrix:
        """Matrix of the w-adjoint ``W^-1 A^T W``."""
        w = self.weights
        return (sp.diags(1.0 / w) @ self.matrix.T @ sp.diags(w)).tocsr()

    def symmetry_defect(self, phi, psi) -> float:
        """Relative failure of the declared (skew-)symmetry on one vector pair."""
        w = self.weights
        lhs = np.sum(w * phi * (self.matrix @ psi))
        rhs = np.sum(w * (self.matrix @ phi) * psi)
        sign = {SELF_ADJOINT: 1.0, SKEW_ADJOINT: -1.0}[self.kind]
        scale = abs(lhs) + abs(rhs) + np.finfo(float).tiny
        return float(abs(lhs - sign * rhs) / scale)


def weighted_symmetric_part(matrix, w):
    a = sp.csr_matrix(matrix)
    return (0.5 * (a + sp.diags(1.0 / w) @ a.T @ sp.diags(w))).tocsr()


def weighted_skew_part(matrix, w):
    a = sp.csr_matrix(matrix)
    return (0.5 * (a - sp.diags(1.0 / w) @ a.T @ sp.diags(w))).tocsr()


def _face_coefficients(grid: SurfaceGrid, axis: int):
    faces = grid.faces(axis)
    _, sqrtg, ginv = chart_metric(grid.chart, faces.u, faces.v)
    return faces, sqrtg, ginv


def _check_orthogonal(grid: SurfaceGrid) -> None:
    g, _, _ = chart_metric(grid.chart, grid.u, grid.v)
    scale = np.max(np.abs(g))
    if np.max(np.abs(g[:, 0, 1])) > ORTHOGONALITY_TOL * scale:
        raise NotImplementedError(
            f"Laplace-Beltrami assembly needs an orthogonal chart; {grid.chart.name!r} is not"
        )


def multiplication(grid: SurfaceGrid, values, name: str = "") -> DiscreteOperator:
    """Diagonal operator ``psi -> values * psi``."""
    return DiscreteOperator(sp.diags(np.asarray(values, float)).tocsr(), grid.weights, SELF_ADJOINT, name)


def position(grid: SurfaceGrid, i: int) -> DiscreteOperator:
    return multiplication(grid, grid.x[:, i], f"x{i + 1}")


def laplace_beltrami(grid: SurfaceGrid) -> DiscreteOperator:
    """Divergence-form ``(1/sqrt g) d_a (sqrt g g^ab d_b)``, compact stencil.

    ``W L`` is symmetric negative semidefinite with constants in its kernel
    by construction.
    """
    _check_orthogonal(grid)
    steps = (grid.h_u, grid.h_v)
    n = grid.size
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for axis in (0, 1):
        faces, sqrtg, ginv = _face_coefficients(grid, axis)
        other = steps[1 - axis]
        b = sqrtg * ginv[:, axis, axis] * other / steps[axis]
        rows += [faces.lo, faces.hi]
        cols += [faces.hi, faces.lo]
        vals += [b, b]
        np.add.at(diag, faces.lo, -b)
        np.add.at(diag, faces.hi, -b)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    stiffness = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    lap = sp.diags(1.0 / grid.weights) @ stiffness
    return DiscreteOperator(weighted_symmetric_part(lap, grid.weights), grid.weights, SELF_ADJOINT, "laplace_beltrami")


def geometric_momentum(grid: SurfaceGrid, i: int) -> DiscreteOperator:
    """Real operator ``D_i`` with ``p_i = -i hbar D_i``.

    The tangential derivative ``(grad_s psi)_i = c^a_i d_a psi`` with
    ``c^a = g^ab X_b`` is discretized in skew form
    ``c^a d_a psi + (1/2)(1/sqrt g) d_a(sqrt g c^a) psi``, using face values of
    ``sqrt(g) c^a``. The zeroth-order term is half the surface divergence of
    the projected axis ``P e_i``, which equals ``(M/2) n_i``; the operator is
    therefore ``grad_s + (M/2) n`` and w-skew by construction.
    """
    steps = (grid.h_u, grid.h_v)
    n = grid.size
    rows, cols, vals = [], [], []
    for axis in (0, 1):
        faces, sqrtg, ginv = _face_coefficients(grid, axis)
        xu = grid.chart.du(faces.u, faces.v)[:, i]
        xv = grid.chart.dv(faces.u, faces.v)[:, i]
        c = ginv[:, axis, 0] * xu + ginv[:, axis, 1] * xv
        a = 0.5 * sqrtg * c * steps[1 - axis]
        rows += [faces.lo, faces.hi]
        cols += [faces.hi, faces.lo]
        vals += [a, -a]
    skew = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    op = sp.diags(1.0 / grid.weights) @ skew
    return DiscreteOperator(weighted_skew_part(op, grid.weights), grid.weights, SKEW_ADJOINT, f"D{i + 1}")


def hamiltonian(grid: SurfaceGrid, include_vg: bool = True, constants: PhysicalConstants | None = None) -> DiscreteOperator:
    """``H = -(hbar^2/2mu) LB + V_G`` (V_G dropped when ``include_vg`` is false)."""
    constants = constants or grid.constants
    lap = laplace_beltrami(grid).matrix
    op = -constants.kinetic * lap
    if include_vg:
        op = op + sp.diags(geometric_potential_values(grid, constants))
    return DiscreteOperator(op.tocsr(), grid.weights, SELF_ADJOINT, "hamiltonian")


def geometric_potential_values(grid: SurfaceGrid, constants: PhysicalConstants | None = None) -> np.ndarray:
    constants = constants or grid.constants
    if constants == grid.constants:
        return grid.curvature.VG
    return grid.curvature.VG * (constants.kinetic / grid.constants.kinetic)


def angular_momentum(grid: SurfaceGrid, i: int, momenta=None) -> DiscreteOperator:
    """Real operator ``Gamma_i = eps_ijk x_j D_k`` with ``G_i = -i hbar Gamma_i``."""
    j, k = (i + 1) % 3, (i + 2) % 3
    d = momenta or [geometric_momentum(grid, m) for m in range(3)]
    x = grid.x
    mat = sp.diags(x[:, j]) @ d[k].matrix - sp.diags(x[:, k]) @ d[j].matrix
    return DiscreteOperator(mat.tocsr(), grid.weights, GENERAL, f"G{i + 1}")
