"""Post-hoc analysis of LC factorizations.

Barycentric projections onto the latent anchors, conversion to single-inner-
marginal (diagonal) form, the closed-form optimal inner marginal, the
low-rank approximation error bound, and a numeric rank probe.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidRank, NegativeOmega, ShapeMismatch
from .lc_core import CostSpec, LcFactors, safe_reciprocal


@dataclass(frozen=True)
class Barycenters:
    """Latent anchor points: Y1 is r1×d, Y2 is r2×d.

    Row k of Y1 is the gQ-weighted mean of the first dataset under Q's
    column k, so it lies in the convex hull of the points that column touches.
    """

    Y1: np.ndarray
    Y2: np.ndarray


def lc_project(f: LcFactors, Z1: np.ndarray, Z2: np.ndarray) -> Barycenters:
    """Barycentric projections Y1 = diag(1/gQ)·Qᵀ·Z1, Y2 = diag(1/gR)·Rᵀ·Z2."""
    Z1 = np.asarray(Z1, dtype=np.float64)
    Z2 = np.asarray(Z2, dtype=np.float64)
    n, m = f.shape
    if Z1.ndim != 2 or Z1.shape[0] != n:
        raise ShapeMismatch(f"Z1 must be {n}×d, got shape {Z1.shape}")
    if Z2.ndim != 2 or Z2.shape[0] != m:
        raise ShapeMismatch(f"Z2 must be {m}×d, got shape {Z2.shape}")
    rq = safe_reciprocal(f.gQ, "gQ")
    rr = safe_reciprocal(f.gR, "gR")
    Y1 = rq[:, None] * (f.Q.T @ Z1)
    Y2 = rr[:, None] * (f.R.T @ Z2)
    return Barycenters(Y1=Y1, Y2=Y2)


def diagonalize(
    f: LcFactors, side: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fold T into one factor, leaving a single shared inner marginal.

    side="left" returns (Q·diag(1/gQ)·T, R, gR): the plan is then
    Q'·diag(1/gR)·Rᵀ. side="right" returns (Q, R·diag(1/gR)·Tᵀ, gQ) with plan
    Q·diag(1/gQ)·R'ᵀ. Both reproduce reconstruct_plan(f) exactly up to
    rounding.
    """
    rq = safe_reciprocal(f.gQ, "gQ")
    rr = safe_reciprocal(f.gR, "gR")
    if side == "left":
        Qp = (f.Q * rq[None, :]) @ f.T
        return Qp, f.R, f.gR.copy()
    if side == "right":
        Rp = (f.R * rr[None, :]) @ f.T.T
        return f.Q, Rp, f.gQ.copy()
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def optimal_g(Q: np.ndarray, R: np.ndarray, c: CostSpec) -> np.ndarray:
    """Closed-form minimizer of ⟨Q·diag(1/g)·Rᵀ, C⟩ over the simplex.

    With omega = diag(Qᵀ·C·R), the minimizer is g_i = √omega_i / Σ_j √omega_j.
    Requires omega entrywise non-negative. Zero entries of omega are kept as
    zeros in g (with a warning): they sit on the simplex boundary, outside
    the closed-form derivation's interior assumption. All-zero omega degrades
    to the uniform vector, again with a warning, since every g then attains
    the same objective.
    """
    Q = np.asarray(Q, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if Q.ndim != 2 or R.ndim != 2 or Q.shape[1] != R.shape[1]:
        raise ShapeMismatch(
            f"Q and R must share a column count, got {Q.shape} and {R.shape}"
        )
    omega = np.einsum("ik,ik->k", Q, c.apply(R))
    if (omega < 0).any():
        raise NegativeOmega(
            f"omega has negative entries (min {omega.min():.3e}); "
            "the closed form does not apply"
        )
    root = np.sqrt(omega)
    total = root.sum()
    if total <= 0.0:
        warnings.warn(
            "omega is identically zero; objective is constant in g, "
            "returning uniform",
            stacklevel=2,
        )
        return np.full(omega.size, 1.0 / omega.size)
    if (omega == 0).any():
        warnings.warn(
            "omega has zero entries; g touches the simplex boundary",
            stacklevel=2,
        )
    return root / total


def rank_bound(c: CostSpec, n: int, m: int, r: int, mass: float) -> float:
    """Upper bound on the cost gap between rank-r and unrestricted transport.

    mass·(max C − min C)·ln(min(n, m)/(r−1)), clamped below at 0 so the
    full-rank edge case (log argument < 1) stays a valid bound.
    """
    if r < 2:
        raise InvalidRank(f"rank bound needs r >= 2, got {r}")
    if c.shape != (n, m):
        raise ShapeMismatch(f"cost shape {c.shape} does not match ({n}, {m})")
    lo, hi = _cost_range(c)
    bound = mass * (hi - lo) * math.log(min(n, m) / (r - 1))
    return max(0.0, bound)


def _cost_range(c: CostSpec) -> tuple[float, float]:
    if c.C is not None:
        return float(c.C.min()), float(c.C.max())
    if c.C1 is None:
        raise ShapeMismatch("cost range needs a linear cost term (C or C1/C2)")
    lo = np.inf
    hi = -np.inf
    # Stream row blocks so the full n×m product never materializes.
    step = max(1, int(2**22 // max(1, c.C2.shape[0])))
    for start in range(0, c.C1.shape[0], step):
        block = c.C1[start : start + step] @ c.C2.T
        lo = min(lo, float(block.min()))
        hi = max(hi, float(block.max()))
    return lo, hi


def numeric_nonneg_rank_upper(P: np.ndarray) -> int:
    """Count of singular values above 1e-10·σ₁ (0 for an all-zero matrix)."""
    P = np.asarray(P, dtype=np.float64)
    s = np.linalg.svd(P, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int((s > 1e-10 * s[0]).sum())
