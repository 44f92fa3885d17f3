"""Physical constants and frozen conventions."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalConstants:
    """Reduced Planck constant and particle mass (natural units by default)."""

    hbar: float = 1.0
    mu: float = 1.0

    def __post_init__(self) -> None:
        if not (self.hbar > 0 and self.mu > 0):
            raise ValueError(f"hbar and mu must be positive, got {self.hbar}, {self.mu}")

    @property
    def kinetic(self) -> float:
        """The prefactor hbar^2 / (2 mu)."""
        return self.hbar**2 / (2.0 * self.mu)


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class GeodesicSignConvention:
    """Global signs applied to (t.S t, t.S t_perp) in the deformed so(3) bracket.

    The raw invariants use the Weingarten convention S = -P (grad n) P with
    t_perp = n x t. The bracket identity for G = x x p only closes with the
    normal curvature taken w.r.t. -S, i.e. kappa -> -kappa. The values are
    frozen here and re-derived by ``brackets.calibrate_geodesic_signs`` on
    the cylinder, where the torsion is nonzero.
    """

    kappa: int = -1
    tau: int = 1


GEODESIC_SIGNS = GeodesicSignConvention()
