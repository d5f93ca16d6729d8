"""Gradients, step sizes, and Gibbs kernels for the three objectives.

The gradients are total derivatives: perturbing Q moves the inner marginal
gQ = Qᵀ1 and therefore X = diag(1/gQ)·T·diag(1/gR), and that dependence is
what the rank-one (column-constant) correction terms account for. Everything
is contracted so that no n×m intermediate is ever allocated; with dense
intra-domain costs the dominant products are A·Q and B·R.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingIntraCost
from .lc_core import CostSpec, LcFactors, safe_reciprocal

STEP_FLOOR = 1e-15


@dataclass(frozen=True)
class GradientTriple:
    """Blockwise gradient (dQ: n×r1, dR: m×r2, dT: r1×r2)."""

    dQ: np.ndarray
    dR: np.ndarray
    dT: np.ndarray


def _require_intra(c: CostSpec) -> None:
    if not c.has_intra:
        raise MissingIntraCost("objective needs intra-domain costs A and B")


def _w_blocks(f: LcFactors, c: CostSpec):
    """(dQ, dR, M) for the linear objective, M = Qᵀ·C·R for reuse."""
    rq = safe_reciprocal(f.gQ, "gQ")
    rr = safe_reciprocal(f.gR, "gR")
    CR = c.apply(f.R)  # (n, r2)
    CRXt = CR @ f.X.T  # (n, r1)
    s = np.einsum("ik,ik->k", CRXt, f.Q) * rq
    dQ = CRXt - s[None, :]
    CtQ = c.apply_t(f.Q)  # (m, r1)
    CtQX = CtQ @ f.X  # (m, r2)
    t = np.einsum("jk,jk->k", CtQX, f.R) * rr
    dR = CtQX - t[None, :]
    M = f.Q.T @ CR  # (r1, r2)
    return dQ, dR, M


def _w_qr(f: LcFactors, c: CostSpec) -> tuple[np.ndarray, np.ndarray]:
    dQ, dR, _ = _w_blocks(f, c)
    return dQ, dR


def _w_t(f: LcFactors, c: CostSpec) -> tuple[np.ndarray, np.ndarray]:
    """(dT, M) with M = Qᵀ·C·R; M is reusable as ⟨C, P⟩ = Σ X ⊙ M."""
    rq = safe_reciprocal(f.gQ, "gQ")
    rr = safe_reciprocal(f.gR, "gR")
    M = f.Q.T @ c.apply(f.R)
    return (M * rq[:, None]) * rr[None, :], M


def _gw_pieces(f: LcFactors, c: CostSpec):
    """Shared contractions: G = Qᵀ·A·Q, H = Rᵀ·B·R, plus A·Q and B·R."""
    AQ = c.A @ f.Q  # (n, r1)
    BR = c.B @ f.R  # (m, r2)
    G = f.Q.T @ AQ  # (r1, r1)
    H = f.R.T @ BR  # (r2, r2)
    return AQ, BR, G, H


def _gw_qr(f: LcFactors, c: CostSpec) -> tuple[np.ndarray, np.ndarray]:
    rq = safe_reciprocal(f.gQ, "gQ")
    rr = safe_reciprocal(f.gR, "gR")
    X = f.X
    AQ, BR, G, H = _gw_pieces(f, c)
    HXt = H @ X.T  # (r2, r1)
    XH = X @ H  # (r1, r2)
    dQ = -4.0 * ((AQ @ X) @ HXt)
    dQ += 2.0 * (c.A_sq @ f.Q.sum(axis=1))[:, None]
    s = np.diag((XH @ X.T) @ G) * rq  # diag of X·H·Xᵀ·G, column-scaled
    dQ += 4.0 * s[None, :]
    GX = G @ X  # (r1, r2)
    dR = -4.0 * (BR @ (X.T @ GX))
    dR += 2.0 * (c.B_sq @ f.R.sum(axis=1))[:, None]
    t = np.diag((X.T @ GX) @ H) * rr
    dR += 4.0 * t[None, :]
    return dQ, dR


def _gw_t(f: LcFactors, c: CostSpec):
    """(dT, G, H); G and H are reusable for cost evaluation."""
    rq = safe_reciprocal(f.gQ, "gQ")
    rr = safe_reciprocal(f.gR, "gR")
    _, _, G, H = _gw_pieces(f, c)
    dT = -4.0 * ((rq[:, None] * (G @ (f.X @ H))) * rr[None, :])
    return dT, G, H


def grad_w(f: LcFactors, c: CostSpec) -> GradientTriple:
    """Gradient triple for the linear objective ⟨C, P⟩.

    dQ = C·R·Xᵀ minus the column-constant correction from gQ's dependence on
    Q; dR mirrors it through Cᵀ; dT = diag(1/gQ)·Qᵀ·C·R·diag(1/gR).
    """
    dQ, dR, M = _w_blocks(f, c)
    rq = safe_reciprocal(f.gQ, "gQ")
    rr = safe_reciprocal(f.gR, "gR")
    dT = (M * rq[:, None]) * rr[None, :]
    return GradientTriple(dQ=dQ, dR=dR, dT=dT)


def grad_gw(f: LcFactors, c: CostSpec) -> GradientTriple:
    """Gradient triple for the quadratic (distortion) objective.

    Main terms carry coefficients 2 (squared-cost row sums) and -4 (cross
    term); the +4 column-constant corrections come from differentiating
    through the inner marginals, as for :func:`grad_w`.
    """
    _require_intra(c)
    dQ, dR = _gw_qr(f, c)
    dT, _, _ = _gw_t(f, c)
    return GradientTriple(dQ=dQ, dR=dR, dT=dT)


def grad_fgw(f: LcFactors, c: CostSpec, alpha: float) -> GradientTriple:
    """Blockwise convex combination alpha·(linear) + (1-alpha)·(quadratic)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    _require_intra(c)
    gw_ = grad_w(f, c)
    gq = grad_gw(f, c)
    return GradientTriple(
        dQ=alpha * gw_.dQ + (1.0 - alpha) * gq.dQ,
        dR=alpha * gw_.dR + (1.0 - alpha) * gq.dR,
        dT=alpha * gw_.dT + (1.0 - alpha) * gq.dT,
    )


def gw_cost(f: LcFactors, c: CostSpec) -> float:
    """Quadratic distortion of the reconstructed plan, via r-sized contractions.

    Evaluates p_rᵀ·A^{⊙2}·p_r + p_cᵀ·B^{⊙2}·p_c − 2·tr(H·Xᵀ·G·X) with
    p_r = P·1, p_c = Pᵀ·1, G = Qᵀ·A·Q, H = Rᵀ·B·R. This equals the
    quadruple-sum distortion for any coupling; when the factors carry tight
    outer marginals it coincides with the reduced form that replaces p_r, p_c
    by Q·1, R·1.
    """
    _require_intra(c)
    X = f.X
    p_r = f.Q @ (X @ f.gR)
    p_c = f.R @ (X.T @ f.gQ)
    t1 = float(p_r @ (c.A_sq @ p_r))
    t2 = float(p_c @ (c.B_sq @ p_c))
    G = f.Q.T @ (c.A @ f.Q)
    H = f.R.T @ (c.B @ f.R)
    t3 = -2.0 * float(((G @ X) * (X @ H)).sum())
    return t1 + t2 + t3


def step_size(g: GradientTriple, gamma: float) -> tuple[float, float]:
    """Sup-norm normalized steps (gamma_qr, gamma_t).

    gamma_qr = gamma / max(‖dQ‖_∞, ‖dR‖_∞), gamma_t = gamma / ‖dT‖_∞; a
    denominator under 1e-15 (an essentially zero gradient) is floored there so
    the step stays finite.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    denom_qr = max(float(np.abs(g.dQ).max()), float(np.abs(g.dR).max()))
    denom_t = float(np.abs(g.dT).max())
    return (
        gamma / max(denom_qr, STEP_FLOOR),
        gamma / max(denom_t, STEP_FLOOR),
    )


def assemble_kernels(
    f: LcFactors, g: GradientTriple, gamma_qr: float, gamma_t: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mirror-descent kernels (KQ, KR, KT) = factor ⊙ exp(−step·gradient).

    With steps from :func:`step_size` every exponent is bounded by gamma in
    magnitude, so the kernels stay within [e^{−γ}, e^{γ}] of the factors.
    """
    KQ = f.Q * np.exp(-gamma_qr * g.dQ)
    KR = f.R * np.exp(-gamma_qr * g.dR)
    KT = f.T * np.exp(-gamma_t * g.dT)
    return KQ, KR, KT
