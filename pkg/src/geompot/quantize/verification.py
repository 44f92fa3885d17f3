"""Grid-refinement checks of the quantum conditions and ordering identities.

Every check applies operator compositions to a fixed suite of smooth test
functions on each grid of a ladder, records the worst w-norm residual over
the suite and over components, and fits a convergence order.

All quantum operators are ``+-i hbar`` times the real operators built in
:mod:`.operators`; the factors of ``i`` are tracked analytically so each
residual below is a real operator applied to a real function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .. import autodiff
from ..constants import PhysicalConstants
from ..surface import ImplicitSurface, curvature_at
from . import operators as ops
from .grid import SurfaceGrid

TEST_SUITE_VERSION = "trig-v1"
MIN_ORDER = 1.5
TARGET_ORDER = 2.0
ORDER_BAND = 0.3
FLOOR_RATIO = 10.0
POLE_CAP = 0.3
ROUNDING_FACTOR = 100.0
SEAM_WIDTH = 2

EXPECT_EXACT = "exact"
EXPECT_MIN_ORDER = "order>=1.5"
EXPECT_SECOND_ORDER = "order~2"
EXPECT_FLOOR = "floor"

VIOLATED_AS_EXPECTED = "VIOLATED-as-expected"


# -- test functions ----------------------------------------------------------


def _angles(grid: SurfaceGrid):
    out = []
    for coord, (a, b), per in zip((grid.u, grid.v), (grid.chart.u_range, grid.chart.v_range), grid.chart.periodic):
        out.append(2 * np.pi * (coord - a) / (b - a) if per else coord)
    return out


def test_functions(grid: SurfaceGrid) -> np.ndarray:
    """The versioned suite as columns of an ``(n_nodes, 5)`` array.

    Every member is a low-order trigonometric polynomial in the chart
    coordinates. Periodic coordinates are rescaled to ``[0, 2 pi)``. On a
    chart with poles the members are chosen from products of ``sin(theta)``
    and ``cos(theta)`` that extend smoothly over the poles (they are
    polynomials in the embedding coordinates of the unit sphere).
    """
    a, b = _angles(grid)
    if grid.chart.has_pole:
        s, c = np.sin(a), np.cos(a)
        cols = [
            c,
            s * np.cos(b) + 0.5 * c * c,
            s * c * np.sin(b),
            s * s * np.cos(2 * b),
            s * c * np.cos(b) + s * np.sin(b) + 0.3 * (s * np.cos(b)) ** 2,
        ]
    else:
        cols = [
            np.cos(a),
            np.sin(b) + 0.5 * np.cos(a + b),
            np.cos(a) * np.sin(2 * b),
            np.sin(2 * a) * np.cos(b) + 0.3,
            np.cos(a - b) * np.sin(a) + 0.2 * np.sin(2 * b),
        ]
    return np.stack(cols, axis=-1)


def interior_mask(grid: SurfaceGrid, cap: float = POLE_CAP) -> np.ndarray:
    """Nodes farther than ``cap`` (chart units) from every non-periodic end."""
    mask = np.ones(grid.size, bool)
    for coord, (a, b), per in zip((grid.u, grid.v), (grid.chart.u_range, grid.chart.v_range), grid.chart.periodic):
        if not per:
            mask &= (coord - a > cap) & (b - coord > cap)
    return mask


def seam_mask(grid: SurfaceGrid, width: int = SEAM_WIDTH) -> np.ndarray:
    """False within ``width`` nodes of a periodic wrap across which the
    embedding jumps (the flat periodic chart and the cylinder axis).

    Position multiplication is discontinuous there, so commutators with
    ``x`` are only meaningful away from the seam.
    """
    mask = np.ones(grid.shape, bool)
    chart = grid.chart
    idx = np.indices(grid.shape)
    for axis, ((a, b), per, n) in enumerate(zip((chart.u_range, chart.v_range), chart.periodic, grid.shape)):
        if not per:
            continue
        other = np.linspace(*(chart.v_range if axis == 0 else chart.u_range), 7)
        lo = np.full_like(other, a)
        hi = np.full_like(other, b)
        p0 = chart.position(*((lo, other) if axis == 0 else (other, lo)))
        p1 = chart.position(*((hi, other) if axis == 0 else (other, hi)))
        if np.max(np.abs(p0 - p1)) > 1e-9 * max(1.0, float(np.max(np.abs(p0)))):
            k = idx[axis]
            mask &= (k >= width) & (k < n - width)
    return mask.ravel()


# -- reports -----------------------------------------------------------------


def fit_order(spacing, residual) -> float:
    """Least-squares slope of ``log residual`` against ``log h``."""
    h = np.log(np.asarray(spacing, float))
    r = np.log(np.asarray(residual, float))
    return float(np.polyfit(h, r, 1)[0])


@dataclass
class VerificationReport:
    """Residual ladder for one identity.

    ``order`` is the fitted slope, or the string ``"exact"`` when every
    residual is below its rounding floor, a propagated bound of
    ``eps * max(|A| |u|)`` over the sparse products involved. ``status`` is ``"PASS"``, ``"FAIL"`` or
    ``"VIOLATED-as-expected"`` for a discriminator run.
    """

    identity: str
    grids: list[tuple[int, int]]
    spacing: list[float]
    residuals: list[float]
    order: float | str
    passed: bool
    expectation: str
    status: str = ""
    interior_residuals: list[float] | None = None
    interior_order: float | None = None
    rounding_floors: list[float] | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.status:
            self.status = "PASS" if self.passed else "FAIL"

    def as_dict(self) -> dict:
        out = {
            "identity": self.identity,
            "grids": [
                {"n_u": nu, "n_v": nv, "residual": r, "rounding_floor": f}
                for (nu, nv), r, f in zip(self.grids, self.residuals, self.rounding_floors or [None] * len(self.grids))
            ],
            "order": self.order,
            "pass": self.passed,
            "status": self.status,
            "expectation": self.expectation,
        }
        if self.interior_order is not None:
            out["interior"] = {"cap": POLE_CAP, "residuals": self.interior_residuals, "order": self.interior_order}
        out.update(self.extra)
        return out


def _is_exact(residuals, floors) -> bool:
    return all(r <= f for r, f in zip(residuals, floors))


def _judge(identity, ladder, run, expectation, extra=None) -> VerificationReport:
    full, interior, floors = run
    grids = [g.shape for g in ladder]
    spacing = [g.spacing for g in ladder]
    residuals = [float(r) for r in full]
    tiny = np.finfo(float).tiny
    if _is_exact(residuals, floors):
        order, passed = "exact", True
    else:
        order = fit_order(spacing, np.maximum(residuals, tiny))
        if expectation == EXPECT_EXACT:
            passed = False
        elif expectation == EXPECT_SECOND_ORDER:
            passed = abs(order - TARGET_ORDER) <= ORDER_BAND
        else:
            passed = order >= MIN_ORDER
    int_res = int_order = None
    if ladder[0].chart.has_pole:
        int_res = [float(r) for r in interior]
        if not _is_exact(int_res, floors):
            int_order = fit_order(spacing, np.maximum(int_res, tiny))
    return VerificationReport(identity, grids, spacing, residuals, order, bool(passed), expectation,
                              interior_residuals=int_res, interior_order=int_order,
                              rounding_floors=[float(f) for f in floors], extra=extra or {})


# -- per-grid operator bundle ------------------------------------------------


class _Tracked:
    """Sparse matrix whose products update a running rounding bound."""

    def __init__(self, matrix, owner: "_Bundle"):
        self.matrix = matrix
        self.abs = abs(matrix)
        self.owner = owner

    def __matmul__(self, u):
        self.owner.bound = max(self.owner.bound, float(np.max(self.abs @ np.abs(u))))
        return self.matrix @ u


class _Bundle:
    """Operators of one grid, applied to a block of test functions.

    ``bound`` accumulates ``max(|A| |u|)`` over every sparse product, which
    caps the rounding error of any composition built from them.
    """

    def __init__(self, grid: SurfaceGrid, constants: PhysicalConstants, include_vg: bool = True):
        self.grid = grid
        self.c = constants
        self.bound = 0.0
        cg = grid.curvature
        self.n = cg.n
        self.dn = cg.dn
        self.M = cg.M
        self.x = grid.x
        self.D = [_Tracked(ops.geometric_momentum(grid, i).matrix, self) for i in range(3)]
        self.L = _Tracked(ops.laplace_beltrami(grid).matrix, self)
        self.H = _Tracked(ops.hamiltonian(grid, include_vg, constants).matrix, self)
        self.psi = test_functions(grid)
        self.valid = seam_mask(grid)
        self.mask = self.valid & interior_mask(grid)

    def norms(self, r: np.ndarray) -> tuple[float, float]:
        wr2 = self.grid.weights[:, None] * r * r
        full = np.sqrt(np.sum(wr2[self.valid], axis=0))
        inner = np.sqrt(np.sum(wr2[self.mask], axis=0)) if np.any(self.mask) else full
        return float(np.max(full)), float(np.max(inner))

    def rounding_floor(self) -> float:
        area = float(np.sum(self.grid.weights))
        return ROUNDING_FACTOR * np.finfo(float).eps * max(self.bound, 1.0) * np.sqrt(area)

    def comm_DH(self, k, psi):
        return self.D[k] @ (self.H @ psi) - self.H @ (self.D[k] @ psi)

    def gamma(self, i, psi):
        j, k = (i + 1) % 3, (i + 2) % 3
        return self.x[:, j, None] * (self.D[k] @ psi) - self.x[:, k, None] * (self.D[j] @ psi)

    def comm_DD(self, i, j, psi):
        return self.D[i] @ (self.D[j] @ psi) - self.D[j] @ (self.D[i] @ psi)


def _run(ladder, constants, include_vg, fn):
    """Worst (full, interior) residual of ``fn(bundle)`` and the rounding floor per grid.

    ``fn`` yields ``(factor, vector)`` pairs; the residual is
    ``factor * |vector|_w``.
    """
    full, inner, floors = [], [], []
    for grid in ladder:
        b = _Bundle(grid, constants, include_vg)
        f = i = fl = 0.0
        for factor, r in fn(b):
            a, c = b.norms(r)
            f, i = max(f, abs(factor) * a), max(i, abs(factor) * c)
            fl = max(fl, abs(factor) * b.rounding_floor())
        full.append(f)
        inner.append(i)
        floors.append(fl)
    return full, inner, floors


def _eq12(b):
    # operator-level commutator of the diagonal matrices X_i X_j - X_j X_i
    psi = b.psi
    for i in range(3):
        for j in range(3):
            xi, xj = b.x[:, i, None], b.x[:, j, None]
            yield 1.0, (xi * xj - xj * xi) * psi


def _eq13(b):
    for i in range(3):
        xi = b.x[:, i, None]
        for j in range(3):
            proj = float(i == j) - b.n[:, i] * b.n[:, j]
            yield b.c.hbar, b.D[j] @ (xi * b.psi) - xi * (b.D[j] @ b.psi) - proj[:, None] * b.psi


def _eq14(b):
    coef = b.c.hbar ** 2 / b.c.mu
    for i in range(3):
        xi = b.x[:, i, None]
        yield 1.0, xi * (b.H @ b.psi) - b.H @ (xi * b.psi) - coef * (b.D[i] @ b.psi)


def _eq15(b):
    total = sum(b.n[:, i, None] * (b.D[i] @ b.psi) + b.D[i] @ (b.n[:, i, None] * b.psi) for i in range(3))
    yield b.c.hbar, total


def _eq16(b):
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        nj, nk = b.n[:, j, None], b.n[:, k, None]
        term = (nj * b.comm_DH(k, b.psi) + b.comm_DH(j, nk * b.psi)) - (nk * b.comm_DH(j, b.psi) + b.comm_DH(k, nj * b.psi))
        yield b.c.hbar, term


def _eq17(b):
    total = 0.0
    for i in range(3):
        ni = b.n[:, i, None]
        a = ni * (b.gamma(i, b.H @ b.psi) - b.H @ b.gamma(i, b.psi))
        v = ni * b.psi
        total = total + a + (b.gamma(i, b.H @ v) - b.H @ b.gamma(i, v))
    yield b.c.hbar, total


def _eq26(b):
    for i in range(3):
        for j in range(i + 1, 3):
            out = b.comm_DD(i, j, b.psi)
            for k in range(3):
                A = (b.n[:, j] * b.dn[:, i, k] - b.n[:, i] * b.dn[:, j, k])[:, None]
                out = out + 0.5 * (A * (b.D[k] @ b.psi) + b.D[k] @ (A * b.psi))
            yield b.c.hbar, out


def _eq27(b):
    def P(j, psi):
        return sum(b.n[:, i, None] * b.comm_DD(i, j, psi) + b.comm_DD(i, j, b.n[:, i, None] * psi) for i in range(3))

    total = sum(b.n[:, j, None] * P(j, b.psi) + P(j, b.n[:, j, None] * b.psi) for j in range(3))
    yield b.c.hbar ** 2, total


def _p_squared(coef: float):
    # p^2/2mu - c hbar^2 M^2/mu + (hbar^2/2mu) LB = -(hbar^2/2mu)(sum D_i D_i - LB + 2c M^2)
    def fn(b):
        dd = sum(b.D[i] @ (b.D[i] @ b.psi) for i in range(3))
        yield b.c.kinetic, dd - b.L @ b.psi + 2 * coef * (b.M ** 2)[:, None] * b.psi

    return fn


# -- public checks -----------------------------------------------------------


def quantum_condition_residuals(
    ladder: Sequence[SurfaceGrid],
    constants: PhysicalConstants | None = None,
    include_vg: bool = True,
    discriminator: bool = False,
) -> list[VerificationReport]:
    """Reports for the commutator conditions ``EQ12`` to ``EQ17``.

    ``EQ12`` commuting positions; ``EQ13`` ``[x_i,p_j] = i hbar (delta - n n)``;
    ``EQ14`` ``[x,H] = i hbar p / mu``; ``EQ15`` ``n.p + p.n = 0``;
    ``EQ16`` ``n x [p,H] + [p,H] x n = 0``; ``EQ17`` ``n.[G,H] + [G,H].n = 0``.

    With ``include_vg`` false and ``discriminator`` true, ``EQ17`` is
    expected to stall at a floor at least ten times the residual of the run
    with the geometric potential; meeting that expectation is reported as
    ``VIOLATED-as-expected`` and counts as a pass. On surfaces where the
    potential vanishes identically the two runs coincide and the ordinary
    convergence test applies.
    """
    ladder = _validate(ladder)
    constants = constants or ladder[0].constants
    out = []
    for name, fn, expect in (
        ("EQ12", _eq12, EXPECT_EXACT),
        ("EQ13", _eq13, EXPECT_MIN_ORDER),
        ("EQ14", _eq14, EXPECT_MIN_ORDER),
        ("EQ15", _eq15, EXPECT_MIN_ORDER),
        ("EQ16", _eq16, EXPECT_MIN_ORDER),
    ):
        out.append(_judge(name, ladder, _run(ladder, constants, include_vg, fn), expect))
    run = _run(ladder, constants, include_vg, _eq17)
    full = run[0]
    vg_zero = all(np.max(np.abs(g.curvature.VG)) == 0.0 for g in ladder)
    if include_vg or vg_zero or not discriminator:
        rep = _judge("EQ17", ladder, run, EXPECT_SECOND_ORDER, {"include_vg": include_vg})
    else:
        ref = _run(ladder, constants, True, _eq17)[0]
        rep = _judge("EQ17", ladder, run, EXPECT_FLOOR, {"include_vg": False})
        ratio = full[-1] / max(ref[-1], np.finfo(float).tiny)
        stalled = full[-1] >= 0.5 * full[-2]
        floor = ratio >= FLOOR_RATIO and stalled
        rep.passed = bool(floor)
        rep.status = VIOLATED_AS_EXPECTED if floor else "FAIL"
        rep.extra.update({"reference_residuals": ref, "floor_ratio": ratio})
    out.append(rep)
    return out


def ordering_identity_checks(ladder: Sequence[SurfaceGrid], constants: PhysicalConstants | None = None) -> list[VerificationReport]:
    """``EQ26``: ``[p_i,p_j]/(i hbar)`` against the symmetrized form
    ``(1/2)(A_k p_k + p_k A_k)``, ``A_k = n_j n_{i,k} - n_i n_{j,k}``.
    ``EQ27``: ``n.P + P.n`` with ``P_j = n.[p,p_j] + [p,p_j].n``.
    """
    ladder = _validate(ladder)
    constants = constants or ladder[0].constants
    out = []
    for name, fn in (("EQ26", _eq26), ("EQ27", _eq27)):
        out.append(_judge(name, ladder, _run(ladder, constants, True, fn), EXPECT_MIN_ORDER))
    return out


P2_VARIANTS = {"hbar^2 M^2/(8 mu)": 1.0 / 8.0, "hbar^2 M^2/(4 mu)": 1.0 / 4.0}
P2_ADOPTED = "hbar^2 M^2/(8 mu)"


def p_squared_consistency(ladder: Sequence[SurfaceGrid], constants: PhysicalConstants | None = None) -> VerificationReport:
    """``(p^2/2mu + V_G - c hbar^2 M^2/mu) psi - H psi`` over the ladder.

    The adopted variant ``c = 1/8`` is the one judged; the alternative
    ``c = 1/4`` is evaluated alongside and its residuals and fitted order
    are recorded, so the report shows which coefficient the discrete
    operators actually satisfy.
    """
    ladder = _validate(ladder)
    constants = constants or ladder[0].constants
    variants = {}
    for label, coef in P2_VARIANTS.items():
        variants[label] = _run(ladder, constants, True, _p_squared(coef))
    rep = _judge("P2", ladder, variants[P2_ADOPTED], EXPECT_SECOND_ORDER)
    summary = {}
    for label, (res, _, floors) in variants.items():
        order = "exact" if _is_exact(res, floors) else fit_order(rep.spacing, res)
        summary[label] = {"residuals": res, "order": order}
    converging = [lab for lab, s in summary.items() if s["order"] == "exact" or s["order"] >= MIN_ORDER]
    rep.extra.update({
        "variant": P2_ADOPTED,
        "hamiltonian": "H = -(hbar^2/2mu) (LB + (M/2)^2 - K)",
        "variants": summary,
        "satisfied_variants": converging,
    })
    return rep


def _validate(ladder):
    ladder = list(ladder)
    if len(ladder) < 3:
        raise ValueError("a convergence ladder needs at least 3 grids")
    sizes = [g.size for g in ladder]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("grid sizes must increase strictly along the ladder")
    return ladder


# -- phi sanity check --------------------------------------------------------

PHI_CANDIDATES: dict[str, Callable] = {
    "tanh": autodiff.tanh,
    "square": lambda j: j * j,
    "exp": autodiff.exp,
    "cubic+sin": lambda j: j * j * j + autodiff.sin(j),
}


def phi_normal_check(surface: ImplicitSurface, x: np.ndarray) -> dict[str, float]:
    """``max |n x grad phi|`` for ``phi = g(f(x))`` over several ``g``.

    ``grad phi`` is obtained by propagating the jet of ``f`` (value,
    gradient and Hessian) through ``g`` with forward-mode differentiation,
    so any such ``phi`` is seen to have a purely normal gradient.
    """
    x = np.asarray(x, float)
    fj = autodiff.Jet(surface.f(x), surface.grad(x), surface.hess(x))
    n = curvature_at(surface, x).n
    out = {}
    for name, g in PHI_CANDIDATES.items():
        grad = g(fj).grad
        scale = np.maximum(np.linalg.norm(grad, axis=-1), 1.0)
        out[name] = float(np.max(np.linalg.norm(np.cross(n, grad), axis=-1) / scale))
    return out


# -- export ------------------------------------------------------------------


def reports_to_json(reports: Sequence[VerificationReport], provenance: dict | None = None) -> str:
    body = {"reports": [r.as_dict() for r in reports]}
    if provenance is not None:
        body = {"provenance": provenance, **body}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def format_reports(reports: Sequence[VerificationReport]) -> str:
    lines = [f"{'identity':<8} {'finest residual':>15} {'order':>7} {'interior':>8}  status"]
    for r in reports:
        order = r.order if isinstance(r.order, str) else f"{r.order:.2f}"
        inner = "" if r.interior_order is None else f"{r.interior_order:.2f}"
        lines.append(f"{r.identity:<8} {r.residuals[-1]:>15.3e} {order:>7} {inner:>8}  {r.status}")
    return "\n".join(lines) + "\n"
