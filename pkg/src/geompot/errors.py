"""Exception types raised across the package."""

from __future__ import annotations


class GeomPotError(Exception):
    """Base class for all package errors."""


class DegenerateGradient(GeomPotError, ValueError):
    """The level function has (numerically) vanishing gradient at a point."""


class SingularMetric(GeomPotError, ValueError):
    """The induced chart metric is degenerate at a requested coordinate."""


class OffManifold(GeomPotError, ValueError):
    """A phase point violates the constraint pair f(x)=0, n.p=0."""


class SingularConstraintMatrix(GeomPotError, ValueError):
    """The 2x2 constraint matrix is not invertible."""


class ZeroMomentum(GeomPotError, ValueError):
    """Geodesic invariants requested for a phase point at rest."""


class NoConvergence(GeomPotError, RuntimeError):
    """The eigensolver stopped before reaching the requested tolerance."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations
