"""Lowest eigenpairs of self-adjoint grid operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import NoConvergence
from .operators import SELF_ADJOINT, DiscreteOperator

SPECTRUM_TOL = 1e-8


@dataclass(frozen=True)
class SpectrumResult:
    """Ascending eigenvalues with per-pair relative residuals.

    The residual of a pair is ``|H v - lam v|_w / ((|lam| + scale) |v|_w)``
    where ``scale`` is a fixed energy unit so that a zero eigenvalue still
    gets a meaningful relative measure.
    """

    eigenvalues: np.ndarray
    residuals: np.ndarray
    eigenvectors: np.ndarray | None = None
    iterations: int | None = None
    energy_scale: float = 1.0
    metadata: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0


def _symmetric_form(op: DiscreteOperator):
    """``W^1/2 A W^-1/2``, which is symmetric when ``A`` is w-self-adjoint."""
    s = np.sqrt(op.weights)
    m = sp.diags(s) @ op.matrix @ sp.diags(1.0 / s)
    return (0.5 * (m + m.T)).tocsc(), s


def spectrum(
    op: DiscreteOperator,
    k: int,
    tol: float = SPECTRUM_TOL,
    seed: int = 0,
    vectors: bool = False,
    energy_scale: float = 1.0,
    maxiter: int | None = None,
) -> SpectrumResult:
    """The ``k`` smallest eigenvalues of a w-self-adjoint operator.

    Shift-invert Lanczos on the symmetric similarity transform, with the
    shift placed below the Gershgorin lower bound so that the largest
    magnitude eigenvalues of the inverse are the lowest ones of ``op``.

    Parameters
    ----------
    op : DiscreteOperator
        Must be declared self-adjoint.
    k : int
        Number of eigenvalues, at most a quarter of the dimension.
    tol : float
        Bound on every returned relative residual.
    seed : int
        Seed of the Lanczos start vector; the result is deterministic.

    Raises
    ------
    NoConvergence
        If ARPACK stops early or a residual exceeds ``tol``.
    """
    if op.kind != SELF_ADJOINT:
        raise ValueError("spectrum needs a self-adjoint operator")
    n = op.shape[0]
    if not 1 <= k <= n // 4:
        raise ValueError(f"k must lie in [1, {n // 4}] for dimension {n}")
    sym, s = _symmetric_form(op)
    diag = sym.diagonal()
    offdiag = np.asarray(abs(sym).sum(axis=1)).ravel() - np.abs(diag)
    lower = float(np.min(diag - offdiag))
    sigma = lower - max(1.0, abs(lower)) * 1e-3
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        vals, vecs = spla.eigsh(sym, k=k, sigma=sigma, which="LM", v0=v0, tol=0.0, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(str(exc), iterations=maxiter) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    resid = np.linalg.norm(sym @ vecs - vecs * vals, axis=0) / ((np.abs(vals) + energy_scale) * np.linalg.norm(vecs, axis=0))
    if np.any(~(resid <= tol)):
        raise NoConvergence(f"eigenpair residual {np.max(resid):.3e} exceeds {tol:.1e}", iterations=maxiter)
    # eigenvectors of op itself, normalised in the w inner product
    out = vecs / s[:, None] if vectors else None
    return SpectrumResult(vals, resid, out, maxiter, energy_scale, {"sigma": sigma, "seed": seed, "solver": "eigsh shift-invert"})


def cluster_eigenvalues(values, gap: float, relative: bool = True) -> list[tuple[float, int]]:
    """Group sorted eigenvalues whose consecutive gap is at most ``gap``.

    With ``relative`` the gap is measured as ``|a - b| / max(1, |b|)``.
    Returns ``(mean, multiplicity)`` pairs.
    """
    vals = np.sort(np.asarray(values, float))
    groups: list[list[float]] = []
    for lam in vals:
        if groups:
            prev = groups[-1][-1]
            d = abs(lam - prev) / (max(1.0, abs(lam)) if relative else 1.0)
            if d <= gap:
                groups[-1].append(lam)
                continue
        groups.append([lam])
    return [(float(np.mean(g)), len(g)) for g in groups]


def format_spectrum(result: SpectrumResult) -> str:
    lines = ["index,eigenvalue,residual"]
    for i, (lam, r) in enumerate(zip(result.eigenvalues, result.residuals)):
        lines.append(f"{i},{lam + 0.0:.12e},{r:.3e}")
    return "\n".join(lines) + "\n"
