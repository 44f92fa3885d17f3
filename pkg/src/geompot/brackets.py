"""Poisson and Dirac brackets for a particle constrained to ``f(x) = 0``.

Observables are functions of the phase-space point ``(x, p)`` carrying exact
first derivatives, either as closed forms or through forward-mode automatic
differentiation. Every routine is batched: a :class:`PhaseSpacePoint` may
hold a single point (arrays of shape ``(3,)``) or many (shape ``(N, 3)``),
and brackets come back with the batch shape.

The second-class constraint pair is ``chi1 = f(x)`` and ``chi2 = n . p``
with ``n = grad f / |grad f|``. Their Poisson bracket is ``|grad f|``, so
the constraint matrix is ``[[0, |grad f|], [-|grad f|, 0]]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff
from .constants import DEFAULT_CONSTANTS, GEODESIC_SIGNS, GeodesicSignConvention, PhysicalConstants
from .errors import OffManifold, SingularConstraintMatrix, ZeroMomentum
from .surface import ImplicitSurface, curvature_at, cylinder, sample_surface_points

MANIFOLD_TOL = 1e-10
C12_FLOOR = 1e-8
CMAT_TOL = 1e-12
DCON_TOL = 1e-10

EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    EPS3[_i, _j, _k] = 1.0
    EPS3[_i, _k, _j] = -1.0

Derivs = tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class PhaseSpacePoint:
    """Position and momentum, single or batched along a leading axis."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.shape != p.shape or x.shape[-1] != 3:
            raise ValueError(f"x and p must share a shape (..., 3); got {x.shape} and {p.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.x.shape[:-1]

    def __len__(self) -> int:
        return int(np.prod(self.batch_shape, dtype=int))

    def constraint_residuals(self, surface: ImplicitSurface) -> tuple[np.ndarray, np.ndarray]:
        """``(f(x), n . p)`` at every point."""
        g = np.asarray(surface.grad(self.x), dtype=float)
        n = g / np.linalg.norm(g, axis=-1, keepdims=True)
        return np.asarray(surface.f(self.x), dtype=float), np.sum(n * self.p, axis=-1)

    def is_on_manifold(self, surface: ImplicitSurface, tol: float = MANIFOLD_TOL) -> np.ndarray:
        chi1, chi2 = self.constraint_residuals(surface)
        pnorm = np.linalg.norm(self.p, axis=-1)
        return (np.abs(chi1) <= tol) & (np.abs(chi2) <= tol * np.maximum(pnorm, np.finfo(float).tiny))


@dataclass(frozen=True)
class Observable:
    """A phase-space function with exact first partials.

    ``fn(x, p)`` returns ``(value, d/dx, d/dp)`` with shapes ``batch``,
    ``batch + (3,)`` and ``batch + (3,)``.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], Derivs]

    def derivatives(self, pt: PhaseSpacePoint) -> Derivs:
        value, dx, dp = self.fn(pt.x, pt.p)
        shape = pt.batch_shape
        return (
            np.broadcast_to(np.asarray(value, float), shape),
            np.broadcast_to(np.asarray(dx, float), shape + (3,)),
            np.broadcast_to(np.asarray(dp, float), shape + (3,)),
        )

    def __call__(self, pt: PhaseSpacePoint) -> np.ndarray:
        return self.derivatives(pt)[0]

    @classmethod
    def from_function(cls, fn: Callable[[Sequence[autodiff.Jet], Sequence[autodiff.Jet]], object], name: str = "obs") -> "Observable":
        """Wrap ``fn(x, p)`` written with jet arithmetic; partials by forward-mode AD."""

        def wrapped(x, p):
            z = np.concatenate(np.broadcast_arrays(x, p), axis=-1)
            value, grad, _ = autodiff.derivatives(lambda v: fn(v[:3], v[3:]), z)
            return value, grad[..., :3], grad[..., 3:]

        return cls(name, wrapped)

    @classmethod
    def constant(cls, c: float, name: str | None = None) -> "Observable":
        c = float(c)
        return cls(name or repr(c), lambda x, p: (np.full(x.shape[:-1], c), np.zeros_like(x), np.zeros_like(p)))

    def _lift(self, other) -> "Observable":
        return other if isinstance(other, Observable) else Observable.constant(other)

    def __add__(self, other) -> "Observable":
        o = self._lift(other)

        def fn(x, p):
            a, b = self.fn(x, p), o.fn(x, p)
            return a[0] + b[0], a[1] + b[1], a[2] + b[2]

        return Observable(f"({self.name} + {o.name})", fn)

    __radd__ = __add__

    def __neg__(self) -> "Observable":
        def fn(x, p):
            a = self.fn(x, p)
            return -a[0], -a[1], -a[2]

        return Observable(f"-{self.name}", fn)

    def __sub__(self, other) -> "Observable":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Observable":
        return self._lift(other) - self

    def __mul__(self, other) -> "Observable":
        o = self._lift(other)

        def fn(x, p):
            a, b = self.fn(x, p), o.fn(x, p)
            va, vb = np.asarray(a[0], float), np.asarray(b[0], float)
            return va * vb, va[..., None] * b[1] + vb[..., None] * a[1], va[..., None] * b[2] + vb[..., None] * a[2]

        return Observable(f"{self.name}*{o.name}", fn)

    __rmul__ = __mul__


# -- built-in observables ----------------------------------------------------


def _unit(i: int, like: np.ndarray) -> np.ndarray:
    e = np.zeros(like.shape)
    e[..., i] = 1.0
    return e


def position(i: int) -> Observable:
    return Observable(f"x{i + 1}", lambda x, p: (x[..., i], _unit(i, x), np.zeros_like(p)))


def momentum(i: int) -> Observable:
    return Observable(f"p{i + 1}", lambda x, p: (p[..., i], np.zeros_like(x), _unit(i, p)))


def hamiltonian(constants: PhysicalConstants = DEFAULT_CONSTANTS) -> Observable:
    """Free Hamiltonian ``p^2 / (2 mu)``."""
    mu = constants.mu
    return Observable("H", lambda x, p: (np.sum(p * p, axis=-1) / (2 * mu), np.zeros_like(x), p / mu))


def angular_momentum(i: int) -> Observable:
    """Component ``i`` of ``G = x cross p``."""
    j, k = (i + 1) % 3, (i + 2) % 3

    def fn(x, p):
        dx = np.zeros(x.shape)
        dp = np.zeros(p.shape)
        dx[..., j], dx[..., k] = p[..., k], -p[..., j]
        dp[..., k], dp[..., j] = x[..., j], -x[..., k]
        return x[..., j] * p[..., k] - x[..., k] * p[..., j], dx, dp

    return Observable(f"G{i + 1}", fn)


def level_constraint(surface: ImplicitSurface) -> Observable:
    """``chi1 = f(x)``."""
    return Observable("chi1", lambda x, p: (surface.f(x), surface.grad(x), np.zeros_like(p)))


def normal_momentum_constraint(surface: ImplicitSurface) -> Observable:
    """``chi2 = n . p`` with the exact off-surface Jacobian of ``n``."""

    def fn(x, p):
        g = np.asarray(surface.grad(x), float)
        gn = np.linalg.norm(g, axis=-1)
        n = g / gn[..., None]
        proj = np.eye(3) - n[..., :, None] * n[..., None, :]
        dn = proj @ np.asarray(surface.hess(x), float) / gn[..., None, None]
        return np.sum(n * p, axis=-1), np.einsum("...i,...ik->...k", p, dn), n

    return Observable("chi2", fn)


# -- brackets ----------------------------------------------------------------


def _poisson(a: Derivs, b: Derivs) -> np.ndarray:
    return np.sum(a[1] * b[2] - a[2] * b[1], axis=-1)


def poisson(a: Observable, b: Observable, pt: PhaseSpacePoint) -> np.ndarray:
    """Canonical Poisson bracket ``sum_i da/dx_i db/dp_i - da/dp_i db/dx_i``."""
    return _poisson(a.derivatives(pt), b.derivatives(pt))


@dataclass(frozen=True)
class ConstraintMatrix:
    """``C_ab = [chi_a, chi_b]_P`` and its inverse, batched as ``(..., 2, 2)``."""

    C: np.ndarray
    inverse: np.ndarray

    @property
    def c12(self) -> np.ndarray:
        return self.C[..., 0, 1]


def constraint_matrix(surface: ImplicitSurface, pt: PhaseSpacePoint) -> ConstraintMatrix:
    """Assemble ``C``; antisymmetry is exact because only ``C_12`` is computed.

    Raises :class:`SingularConstraintMatrix` if ``|C_12| < 1e-8`` anywhere.
    """
    chi = (level_constraint(surface).derivatives(pt), normal_momentum_constraint(surface).derivatives(pt))
    return _constraint_matrix(chi)


def _constraint_matrix(chi) -> ConstraintMatrix:
    c12 = _poisson(chi[0], chi[1])
    if np.any(~(np.abs(c12) >= C12_FLOOR)):
        raise SingularConstraintMatrix(f"|C12| below {C12_FLOOR:g} (min {np.min(np.abs(c12)):.3e})")
    zero = np.zeros_like(c12)
    C = np.stack([np.stack([zero, c12], -1), np.stack([-c12, zero], -1)], -2)
    inv = np.stack([np.stack([zero, -1.0 / c12], -1), np.stack([1.0 / c12, zero], -1)], -2)
    return ConstraintMatrix(C, inv)


class DiracBracket:
    """Dirac bracket at a fixed batch of phase points on ``surface``.

    The constraint derivatives and ``C^-1`` are computed once, so many
    brackets at the same points cost one Poisson evaluation each.
    """

    def __init__(self, surface: ImplicitSurface, pt: PhaseSpacePoint, tol: float = MANIFOLD_TOL):
        ok = pt.is_on_manifold(surface, tol)
        if not np.all(ok):
            chi1, chi2 = pt.constraint_residuals(surface)
            raise OffManifold(
                f"{int(np.size(ok) - np.count_nonzero(ok))} point(s) violate the constraints"
                f" (max |f| = {np.max(np.abs(chi1)):.3e}, max |n.p| = {np.max(np.abs(chi2)):.3e})"
            )
        self.surface = surface
        self.pt = pt
        self.chi = (level_constraint(surface).derivatives(pt), normal_momentum_constraint(surface).derivatives(pt))
        self.matrix = _constraint_matrix(self.chi)

    def derivs(self, a: Observable | Derivs) -> Derivs:
        return a.derivatives(self.pt) if isinstance(a, Observable) else a

    def __call__(self, a: Observable | Derivs, b: Observable | Derivs) -> np.ndarray:
        da, db = self.derivs(a), self.derivs(b)
        a_chi = np.stack([_poisson(da, c) for c in self.chi], -1)
        chi_b = np.stack([_poisson(c, db) for c in self.chi], -1)
        correction = np.einsum("...a,...ab,...b->...", a_chi, self.matrix.inverse, chi_b)
        return _poisson(da, db) - correction


def dirac(a: Observable, b: Observable, pt: PhaseSpacePoint, surface: ImplicitSurface) -> np.ndarray:
    """``[a,b]_P - [a,chi_a]_P C^-1_ab [chi_b,b]_P``.

    Raises :class:`OffManifold` or :class:`SingularConstraintMatrix`.
    """
    return DiracBracket(surface, pt)(a, b)


# -- geometry of the geodesic ------------------------------------------------


@dataclass(frozen=True)
class GeodesicInvariants:
    """Raw normal curvature ``t.S t`` and geodesic torsion ``t.S (n x t)``."""

    kappa: np.ndarray
    tau: np.ndarray

    def signed(self, signs: GeodesicSignConvention = GEODESIC_SIGNS) -> "GeodesicInvariants":
        return GeodesicInvariants(signs.kappa * self.kappa, signs.tau * self.tau)


def geodesic_invariants(surface: ImplicitSurface, pt: PhaseSpacePoint) -> GeodesicInvariants:
    """Curvature and torsion of the geodesic through ``x`` along ``p``.

    Raises :class:`ZeroMomentum` if ``|p| = 0`` at any point.
    """
    pnorm = np.linalg.norm(pt.p, axis=-1)
    if np.any(~(pnorm > 0)):
        raise ZeroMomentum("geodesic direction undefined for p = 0")
    cs = curvature_at(surface, pt.x)
    t = pt.p / pnorm[..., None]
    tperp = np.cross(cs.n, t)
    St = np.einsum("...ij,...j->...i", cs.S, t)
    return GeodesicInvariants(np.sum(t * St, axis=-1), np.sum(tperp * St, axis=-1))


def _g_derivs(pt):
    return [angular_momentum(i).derivatives(pt) for i in range(3)]


def angular_momentum_bracket_check(
    surface: ImplicitSurface,
    pt: PhaseSpacePoint,
    signs: GeodesicSignConvention = GEODESIC_SIGNS,
) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of the deformed so(3) algebra of ``G = x cross p``.

    Returns ``(full, reduced)``, each of shape ``batch + (3, 3)``: ``full`` is
    ``[G_i,G_j]_D - eps_ijk {G_k - x_k tau (x.p) + (x_k kappa - n_k)(n.G)}``
    and ``reduced`` is ``[G_i,G_j]_D - eps_ijk G_k``.
    """
    bracket = DiracBracket(surface, pt)
    G = _g_derivs(pt)
    lhs = np.stack([np.stack([bracket(G[i], G[j]) for j in range(3)], -1) for i in range(3)], -2)
    x, p = pt.x, pt.p
    n = curvature_at(surface, x).n
    Gv = np.cross(x, p)
    inv = geodesic_invariants(surface, pt).signed(signs)
    xp = np.sum(x * p, axis=-1)
    nG = np.sum(n * Gv, axis=-1)
    inner = Gv - x * (inv.tau * xp)[..., None] + (x * inv.kappa[..., None] - n) * nG[..., None]
    full = lhs - np.einsum("ijk,...k->...ij", EPS3, inner)
    reduced = lhs - np.einsum("ijk,...k->...ij", EPS3, Gv)
    return full, reduced


@dataclass(frozen=True)
class SignCalibration:
    convention: GeodesicSignConvention
    residuals: dict


def calibrate_geodesic_signs(surface: ImplicitSurface | None = None, count: int = 64, seed: int = 0) -> SignCalibration:
    """Pick the signs of ``kappa`` and ``tau`` that close the ``G`` algebra.

    The default surface is the unit cylinder, where both the torsion and
    ``n . G`` are generically nonzero so each sign is exercised.
    """
    surface = surface or cylinder()
    pts = sample_phase_points(surface, count, seed)
    residuals = {}
    for sk in (1, -1):
        for st in (1, -1):
            full, _ = angular_momentum_bracket_check(surface, pts, GeodesicSignConvention(sk, st))
            residuals[(sk, st)] = float(np.max(np.abs(full)))
    ranked = sorted(residuals, key=residuals.get)
    best, runner_up = ranked[0], ranked[1]
    if residuals[runner_up] <= 1e3 * max(residuals[best], 1e-14):
        raise RuntimeError(f"sign calibration is ambiguous on {surface.name!r}: {residuals}")
    return SignCalibration(GeodesicSignConvention(*best), residuals)


@dataclass(frozen=True)
class EquationsOfMotion:
    dx: np.ndarray
    dp: np.ndarray
    dG: np.ndarray
    expected_dp: np.ndarray
    torque: np.ndarray


def equations_of_motion(
    surface: ImplicitSurface,
    pt: PhaseSpacePoint,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> EquationsOfMotion:
    """Dirac-bracket time derivatives of ``x``, ``p`` and ``G`` under ``p^2/2mu``.

    Also returns the closed forms ``-n (p.grad n.p)/mu`` and the torque
    ``T = -(x cross n)(p.grad n.p)/mu`` to compare against.
    """
    bracket = DiracBracket(surface, pt)
    H = hamiltonian(constants).derivatives(pt)
    dx = np.stack([bracket(position(i), H) for i in range(3)], -1)
    dp = np.stack([bracket(momentum(i), H) for i in range(3)], -1)
    G = _g_derivs(pt)
    dG = np.stack([bracket(G[i], H) for i in range(3)], -1)
    cs = curvature_at(surface, pt.x)
    pdnp = np.einsum("...i,...ik,...k->...", pt.p, cs.dn, pt.p)
    expected_dp = -cs.n * (pdnp / constants.mu)[..., None]
    torque = -np.cross(pt.x, cs.n) * (pdnp / constants.mu)[..., None]
    return EquationsOfMotion(dx, dp, dG, expected_dp, torque)


def sample_phase_points(surface: ImplicitSurface, count: int, seed: int) -> PhaseSpacePoint:
    """Seeded on-manifold phase points; ``p`` is a projected Gaussian draw."""
    x = sample_surface_points(surface, count, seed)
    rng = np.random.default_rng([seed, 1])
    w = rng.standard_normal((count, 3))
    n = curvature_at(surface, x).n
    p = w - np.sum(w * n, axis=-1, keepdims=True) * n
    # one more pass removes the rounding left by the first
    p = p - np.sum(p * n, axis=-1, keepdims=True) * n
    return PhaseSpacePoint(x, p)


# -- verification suite ------------------------------------------------------

IDENTITY_IDS = ("EQ3", "EQ4", "EQ5", "EQ6", "EQ7", "EQ8", "EQ9", "NT0", "CMAT", "DCON")


@dataclass(frozen=True)
class IdentityCheck:
    identity: str
    samples: int
    max_residual: float
    tolerance: float
    passed: bool
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "note": self.note,
        }


def _check(identity, samples, residual, tol, note=""):
    r = float(np.max(np.abs(residual))) if np.size(residual) else 0.0
    return IdentityCheck(identity, samples, r, float(tol), bool(r <= tol), note)


def verify_classical(
    surface: ImplicitSurface,
    samples: int = 1000,
    seed: int = 0,
    tol: float = 1e-8,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    signs: GeodesicSignConvention = GEODESIC_SIGNS,
) -> list[IdentityCheck]:
    """Evaluate every classical identity at ``samples`` seeded phase points.

    ``CMAT`` compares ``C`` with ``[[0,1],[-1,0]]`` on signed-distance
    surfaces and with ``[[0,|grad f|],[-|grad f|,0]]`` otherwise. ``CMAT`` and
    ``DCON`` use their own tolerances unless ``tol`` is tighter.
    """
    pt = sample_phase_points(surface, samples, seed)
    bracket = DiracBracket(surface, pt)
    X = [position(i).derivatives(pt) for i in range(3)]
    P = [momentum(i).derivatives(pt) for i in range(3)]
    cs = curvature_at(surface, pt.x)
    n, dn = cs.n, cs.dn
    eye = np.eye(3)

    def table(A, B):
        return np.stack([np.stack([bracket(A[i], B[j]) for j in range(3)], -1) for i in range(3)], -2)

    out = []
    out.append(_check("EQ3", samples, table(X, X), tol))
    out.append(_check("EQ4", samples, table(X, P) - (eye - n[..., :, None] * n[..., None, :]), tol))
    dnp = np.einsum("...ik,...k->...i", dn, pt.p)
    rhs5 = n[..., None, :] * dnp[..., :, None] - n[..., :, None] * dnp[..., None, :]
    out.append(_check("EQ5", samples, table(P, P) - rhs5, tol))
    full, _ = angular_momentum_bracket_check(surface, pt, signs)
    out.append(_check("EQ6", samples, full, tol, f"kappa sign {signs.kappa:+d}, tau sign {signs.tau:+d}"))
    eom = equations_of_motion(surface, pt, constants)
    out.append(_check("EQ7", samples, eom.dx - pt.p / constants.mu, tol))
    out.append(_check("EQ8", samples, eom.dp - eom.expected_dp, tol))
    out.append(_check("EQ9", samples, eom.dG - eom.torque, tol))
    out.append(_check("NT0", samples, np.sum(n * eom.torque, axis=-1), tol))
    C = bracket.matrix.C
    if surface.signed_distance:
        target, note = np.array([[0.0, 1.0], [-1.0, 0.0]]), "signed distance: C = [[0,1],[-1,0]]"
    else:
        c12 = cs.grad_norm
        zero = np.zeros_like(c12)
        target = np.stack([np.stack([zero, c12], -1), np.stack([-c12, zero], -1)], -2)
        note = "general level set: C12 = |grad f|"
    out.append(_check("CMAT", samples, C - target, min(tol, CMAT_TOL), note))
    probes = X + P + _g_derivs(pt) + [hamiltonian(constants).derivatives(pt)]
    dcon = np.stack([bracket(a, c) for a in probes for c in bracket.chi], -1)
    out.append(_check("DCON", samples, dcon, min(tol, DCON_TOL), "[a, chi]_D for x, p, G, H"))
    return out


def format_classical_report(checks: Sequence[IdentityCheck], fmt: str = "table") -> str:
    """Fixed-width table or a JSON object keyed by identity id."""
    if fmt == "json":
        return json.dumps({c.identity: c.as_dict() for c in checks}, indent=2, sort_keys=True) + "\n"
    lines = [f"{'identity':<8} {'samples':>7} {'max|residual|':>14} {'tol':>9}  result"]
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"{c.identity:<8} {c.samples:>7d} {c.max_residual:>14.3e} {c.tolerance:>9.1e}  {status}")
    return "\n".join(lines) + "\n"
