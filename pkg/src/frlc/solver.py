"""Coordinate mirror-descent driver for low-rank transport.

Each outer iteration relaxes the factor pair (Q, R) with the mode's scaling
projections, recomputes the inner marginals, then re-solves the latent
coupling T between them with balanced scaling. Because every projection pins
its tight side exactly on exit, iterates stay feasible by construction and no
alternating projection onto constraint intersections is ever needed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import objectives
from .errors import (
    InvalidRank,
    MissingIntraCost,
    NotConverged,
    ShapeMismatch,
)
from .lc_core import (
    CostSpec,
    LcFactors,
    ProblemSpec,
    inner_marginals,
    marginal_residuals,
    uniform_marginal,
)
from .projections import (
    ScalingResult,
    sinkhorn,
    sr_right_projection,
    unbalanced_projection,
)


@dataclass(frozen=True)
class SolveReport:
    """Everything a solve produced.

    ``cost_trace`` and ``delta_trace`` have one entry per outer iteration
    (``iters`` total). ``converged`` is False when the movement criterion was
    still above epsilon at max_iter; the factors are returned either way.
    ``inner_failures`` counts inner scaling loops that hit their sweep cap and
    continued with their best-effort output.
    """

    factors: LcFactors
    cost_trace: tuple[float, ...]
    delta_trace: tuple[float, ...]
    iters: int
    left_residual: float
    right_residual: float
    wall_time: float
    seed_used: int
    converged: bool
    inner_failures: int

    @property
    def cost(self) -> float:
        return self.cost_trace[-1]


def initialize_couplings(
    a: np.ndarray,
    b: np.ndarray,
    r1: int,
    r2: int,
    seed: int,
    *,
    delta: float = 1e-9,
    max_iter: int = 1000,
) -> LcFactors:
    """Random feasible factors: scaled uniform-kernel couplings.

    Draws three cost matrices entrywise uniform on [0, 1) from the seeded
    generator (Q's, then R's, then T's), exponentiates them into positive
    kernels, and scales: Q between (a, uniform/r1), R between (b, uniform/r2),
    then T between the realized inner marginals. The exponentiated uniform
    kernel keeps all singular values of the scaled output bounded away from
    zero, so Q has numeric rank min(n, r1) and R min(m, r2).

    NotConverged from the inner scaling loops propagates; there is no
    best-effort path during initialization.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rng = np.random.default_rng(seed)
    CQ = rng.uniform(size=(a.size, r1))
    CR = rng.uniform(size=(b.size, r2))
    CT = rng.uniform(size=(r1, r2))
    Q = sinkhorn(np.exp(CQ), a, uniform_marginal(r1), delta, max_iter).scaled
    R = sinkhorn(np.exp(CR), b, uniform_marginal(r2), delta, max_iter).scaled
    gQ, gR = inner_marginals(Q, R)
    T = sinkhorn(np.exp(CT), gQ, gR, delta, max_iter).scaled
    return LcFactors(Q=Q, R=R, T=T)


def rank2_init(
    a: np.ndarray, b: np.ndarray, r1: int, r2: int, c: CostSpec
) -> LcFactors:
    """Deterministic feasible initialization with rank-2 content.

    Each factor is the affine blend lam*p1*q1' + (1-lam)*p2*q2' of two outer
    products, where p1/q1 are linear ramps and p2/q2 absorb the remainder so
    the prescribed marginals hold exactly. Every entry is strictly positive
    and every column carries macroscopic, pairwise-distinct mass, which the
    multiplicative updates need: columns that start identical receive
    identical updates and stay fused for the whole run. The inner marginals
    start uniform and T is the matching blend between them. Only the
    marginals enter the construction; ``c`` is accepted so call sites can
    treat initializers uniformly.
    """
    if r1 < 2 or r2 < 2:
        raise InvalidRank(f"rank2_init needs r1, r2 >= 2, got ({r1}, {r2})")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    def _ramp(k: int) -> np.ndarray:
        v = np.arange(1, k + 1, dtype=np.float64)
        return v / v.sum()

    def _blend(p: np.ndarray, q: np.ndarray) -> np.ndarray:
        lam = 0.5 * min(float(p.min()), float(q.min()))
        p1, q1 = _ramp(p.size), _ramp(q.size)
        p2 = (p - lam * p1) / (1.0 - lam)
        q2 = (q - lam * q1) / (1.0 - lam)
        return lam * np.outer(p1, q1) + (1.0 - lam) * np.outer(p2, q2)

    gq = uniform_marginal(r1)
    gr = uniform_marginal(r2)
    return LcFactors(Q=_blend(a, gq), R=_blend(b, gr), T=_blend(gq, gr))


def delta_criterion(
    prev: LcFactors, curr: LcFactors, gamma_qr: float, gamma_t: float
) -> float:
    """Step-normalized squared movement of the iterate.

    ‖ΔQ‖_F²/γ_qr² + ‖ΔR‖_F²/γ_qr² + ‖ΔT‖_F²/γ_t², with each block measured
    against the step size that produced it.
    """
    dq = float(((curr.Q - prev.Q) ** 2).sum())
    dr = float(((curr.R - prev.R) ** 2).sum())
    dt = float(((curr.T - prev.T) ** 2).sum())
    return (dq + dr) / gamma_qr**2 + dt / gamma_t**2


def _soft(result_or_exc) -> tuple[ScalingResult, int]:
    """Unwrap a projection call, converting NotConverged into best-effort."""
    try:
        return result_or_exc(), 0
    except NotConverged as exc:
        return exc.result, 1


GAUGE_FLOOR = 1e-12


def _ensure_column_mass(F: np.ndarray, outer: np.ndarray) -> np.ndarray:
    """Keep every factor column's mass at or above GAUGE_FLOOR.

    The plan Q·diag(1/g_Q)·T·diag(1/g_R)·Rᵀ is invariant under rescaling a
    factor column (the 1/g normalization absorbs it), so a column's absolute
    mass is gauge. Relaxed projections only anchor it to its own previous
    value, and an objective that wants a latent cluster empty walks that
    anchor down by e^-gamma per iteration until the 1e-15 inner-marginal
    floor kills the factorization. Lifting tiny columns back to 1e-12 (and
    re-seeding all-zero ones along the outer marginal) keeps the
    parametrization alive while perturbing the plan by at most ~1e-12 mass.
    """
    mass = F.sum(axis=0)
    low = mass < GAUGE_FLOOR
    if not low.any():
        return F
    F = F.copy()
    for k in np.flatnonzero(low):
        if mass[k] > 0.0:
            F[:, k] *= GAUGE_FLOOR / mass[k]
        else:
            F[:, k] = outer * (GAUGE_FLOOR / outer.sum())
    return F


def _regauge_masses(
    Q: np.ndarray, R: np.ndarray, mode: str
) -> tuple[np.ndarray, np.ndarray]:
    """Rescale relaxed factors so both carry the same total mass.

    The plan reads Q and R only through their column-normalized forms, so a
    scalar rescale is pure gauge: the represented coupling is untouched. What
    it fixes is the latent rescaling step, whose balanced target pair (gQ, gR)
    is infeasible whenever the factor masses disagree; a damped projection
    drifts off mass 1 while a pinned one cannot. The side whose outer marginal
    is pinned keeps its mass, and with both sides damped the two mass
    estimates meet at their geometric mean, the compromise alternating
    scaling itself oscillates around.
    """
    mq = max(float(Q.sum()), GAUGE_FLOOR)
    mr = max(float(R.sum()), GAUGE_FLOOR)
    if mode == "sr-left":
        return Q * (mr / mq), R
    if mode == "sr-right":
        return Q, R * (mq / mr)
    mu = math.sqrt(mq * mr)
    return Q * (mu / mq), R * (mu / mr)


def _repair_columns(T: np.ndarray, gR: np.ndarray) -> np.ndarray:
    """Exact column repair: shift the minimal mass between columns of T,
    proportionally within each row, so column sums meet ``gR`` without
    touching row sums.

    The latent coupling occasionally leaves its scaling loop with a few
    columns short by more mass than its tiniest entries can carry in any
    reasonable number of sweeps (the kernel turns near-permutation late in a
    run). Feasibility only needs *some* nearby coupling, so this closed-form
    repair replaces an open-ended scaling continuation. Surplus columns only
    give and deficit columns only receive, so ``||T' - T||_1`` equals the
    column error that was repaired. When total masses differ (relaxed modes)
    the leftover |sum(gQ) - sum(gR)| stays where it must.
    """
    T = T.copy()
    e = T.sum(axis=0) - gR
    surplus = [j for j in range(e.size) if e[j] > 0]
    deficit = [j for j in range(e.size) if e[j] < 0]
    si = di = 0
    while si < len(surplus) and di < len(deficit):
        j, l = surplus[si], deficit[di]
        moved = min(e[j], -e[l])
        col_sum = float(T[:, j].sum())
        if not (moved > 0 and col_sum > 0):  # unreachable; guards the loop
            break
        share = T[:, j] * (moved / col_sum)
        T[:, j] -= share
        T[:, l] += share
        e[j] -= moved
        e[l] += moved
        if e[j] <= 0:
            si += 1
        if e[l] >= 0:
            di += 1
    return np.maximum(T, 0.0)


def _check_problem(p: ProblemSpec, c: CostSpec, init: LcFactors | None) -> None:
    if c.shape != p.shape:
        raise ShapeMismatch(
            f"cost shape {c.shape} does not match problem shape {p.shape}"
        )
    if p.objective in ("w", "fgw") and not c.has_linear:
        raise ShapeMismatch(
            f"objective {p.objective!r} needs a linear cost term (C or C1/C2)"
        )
    if p.objective in ("gw", "fgw") and not c.has_intra:
        raise MissingIntraCost(
            f"objective {p.objective!r} needs intra-domain costs A and B"
        )
    if init is not None:
        if init.shape != p.shape:
            raise ShapeMismatch(
                f"init factors have shape {init.shape}, problem has {p.shape}"
            )
        if init.ranks != (p.r1, p.r2):
            raise ShapeMismatch(
                f"init factors have ranks {init.ranks}, problem asks "
                f"({p.r1}, {p.r2})"
            )


def _qr_gradients(
    f: LcFactors, c: CostSpec, objective: str, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    if objective == "w":
        return objectives._w_qr(f, c)
    if objective == "gw":
        return objectives._gw_qr(f, c)
    dqw, drw = objectives._w_qr(f, c)
    dqg, drg = objectives._gw_qr(f, c)
    return alpha * dqw + (1.0 - alpha) * dqg, alpha * drw + (1.0 - alpha) * drg


def frlc_solve(
    p: ProblemSpec, c: CostSpec, init: LcFactors | None = None
) -> SolveReport:
    """Run the alternating factor/coupling descent to a stationary point.

    Per iteration: gradient pair for (Q, R) at the current iterate, sup-norm
    step, mirror kernels, mode-dependent projections (balanced: both factors
    semi-relaxed toward the previous inner marginals; unbalanced: both damped;
    sr-left: Q damped, R pinned to b; sr-right: Q pinned to a, R damped), a
    mass re-gauge so damped factors agree with pinned ones in total, then
    the T-gradient at the mid-point (new factors, old coupling), and a
    balanced rescaling of T between the refreshed inner marginals with the
    gQ side pinned. Stops once the step-normalized movement drops to
    ``p.epsilon`` with at least ``p.min_iter`` iterations done, else at
    ``p.max_iter`` with ``converged=False`` (no exception).

    Inner scaling loops that hit their sweep cap contribute their best-effort
    output and are tallied in ``inner_failures``.
    """
    start = time.perf_counter()
    _check_problem(p, c, init)
    a, b = p.a, p.b
    if init is None:
        f = initialize_couplings(
            a, b, p.r1, p.r2, p.seed, delta=p.delta, max_iter=p.max_inner_balanced
        )
    else:
        f = init
    cost_trace: list[float] = []
    delta_trace: list[float] = []
    failures = 0
    converged = False
    iters = 0
    cap = p.max_inner_relaxed
    # Scaling vectors from the previous outer iteration warm-start the next
    # one; the kernels drift slowly near stationarity, so the inner loops
    # finish in a handful of sweeps instead of restarting from ones.
    uq = vq = ur = vr = ut = vt = None
    for k in range(1, p.max_iter + 1):
        iters = k
        dQ, dR = _qr_gradients(f, c, p.objective, p.alpha)
        denom = max(float(np.abs(dQ).max()), float(np.abs(dR).max()))
        gamma_qr = p.gamma / max(denom, objectives.STEP_FLOOR)
        KQ = f.Q * np.exp(-gamma_qr * dQ)
        KR = f.R * np.exp(-gamma_qr * dR)
        gQ_prev, gR_prev = f.gQ, f.gR
        if p.mode == "balanced":
            res_q, fq = _soft(
                lambda: sr_right_projection(
                    KQ, gamma_qr, p.tau, a, gQ_prev, p.delta, cap, uq, vq
                )
            )
            res_r, fr = _soft(
                lambda: sr_right_projection(
                    KR, gamma_qr, p.tau, b, gR_prev, p.delta, cap, ur, vr
                )
            )
        elif p.mode == "unbalanced":
            res_q, fq = _soft(
                lambda: unbalanced_projection(
                    KQ, gamma_qr, p.tau, a, gQ_prev, p.delta, cap, uq, vq
                )
            )
            res_r, fr = _soft(
                lambda: unbalanced_projection(
                    KR, gamma_qr, p.tau2, b, gR_prev, p.delta, cap, ur, vr
                )
            )
        elif p.mode == "sr-left":
            res_q, fq = _soft(
                lambda: unbalanced_projection(
                    KQ, gamma_qr, p.tau, a, gQ_prev, p.delta, cap, uq, vq
                )
            )
            res_r, fr = _soft(
                lambda: sr_right_projection(
                    KR, gamma_qr, p.tau, b, gR_prev, p.delta, cap, ur, vr
                )
            )
        else:  # sr-right
            res_q, fq = _soft(
                lambda: sr_right_projection(
                    KQ, gamma_qr, p.tau, a, gQ_prev, p.delta, cap, uq, vq
                )
            )
            res_r, fr = _soft(
                lambda: unbalanced_projection(
                    KR, gamma_qr, p.tau, b, gR_prev, p.delta, cap, ur, vr
                )
            )
        failures += fq + fr
        uq, vq = res_q.u, res_q.v
        ur, vr = res_r.u, res_r.v
        Q_new, R_new = res_q.scaled, res_r.scaled
        if p.mode != "balanced":
            Q_new, R_new = _regauge_masses(Q_new, R_new, p.mode)
        f_mid = LcFactors(
            Q=_ensure_column_mass(Q_new, a),
            R=_ensure_column_mass(R_new, b),
            T=f.T,
        )
        M = G = H = None
        if p.objective == "w":
            dT, M = objectives._w_t(f_mid, c)
        elif p.objective == "gw":
            dT, G, H = objectives._gw_t(f_mid, c)
        else:
            dTw, M = objectives._w_t(f_mid, c)
            dTg, G, H = objectives._gw_t(f_mid, c)
            dT = p.alpha * dTw + (1.0 - p.alpha) * dTg
        gamma_t = p.gamma / max(float(np.abs(dT).max()), objectives.STEP_FLOOR)
        KT = f.T * np.exp(-gamma_t * dT)
        res_t, ft = _soft(
            lambda: sinkhorn(
                KT, f_mid.gQ, f_mid.gR, p.delta, p.max_inner_balanced, ut, vt
            )
        )
        failures += ft
        ut, vt = res_t.u, res_t.v
        f_new = LcFactors(Q=f_mid.Q, R=f_mid.R, T=res_t.scaled)
        cost_trace.append(_objective_value(f_new, c, p.objective, p.alpha, M, G, H))
        delta_k = delta_criterion(f, f_new, gamma_qr, gamma_t)
        delta_trace.append(delta_k)
        f = f_new
        if k >= p.min_iter and delta_k <= p.epsilon:
            converged = True
            break
    # Terminal feasibility restoration: if the last T scaling left its loose
    # (column) side further from gR than the inherent total-mass gap allows,
    # repair it in closed form and refresh the reported cost. Q and R are
    # untouched, so the cached contractions stay valid.
    col_gap = float(np.abs(f.T.sum(axis=0) - f.gR).sum())
    mass_gap = abs(float(f.gQ.sum()) - float(f.gR.sum()))
    if col_gap > mass_gap + p.delta:
        f = LcFactors(Q=f.Q, R=f.R, T=_repair_columns(f.T, f.gR))
        cost_trace[-1] = _objective_value(f, c, p.objective, p.alpha, M, G, H)
    left, right = marginal_residuals(f, a, b)
    return SolveReport(
        factors=f,
        cost_trace=tuple(cost_trace),
        delta_trace=tuple(delta_trace),
        iters=iters,
        left_residual=left,
        right_residual=right,
        wall_time=time.perf_counter() - start,
        seed_used=p.seed,
        converged=converged,
        inner_failures=failures,
    )


def _objective_value(
    f: LcFactors,
    c: CostSpec,
    objective: str,
    alpha: float,
    M: np.ndarray | None,
    G: np.ndarray | None,
    H: np.ndarray | None,
) -> float:
    """Cost of the current iterate, reusing contractions from the T step.

    M = Qᵀ·C·R is exact for the linear part since the T update does not touch
    Q or R. The quadratic part reuses G = Qᵀ·A·Q and H = Rᵀ·B·R the same way.
    """
    linear = float((f.X * M).sum()) if M is not None else 0.0
    quad = 0.0
    if G is not None:
        X = f.X
        p_r = f.Q @ (X @ f.gR)
        p_c = f.R @ (X.T @ f.gQ)
        quad = float(p_r @ (c.A_sq @ p_r)) + float(p_c @ (c.B_sq @ p_c))
        quad -= 2.0 * float(((G @ X) * (X @ H)).sum())
    if objective == "w":
        return linear
    if objective == "gw":
        return quad
    return alpha * linear + (1.0 - alpha) * quad
