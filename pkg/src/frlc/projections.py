"""Matrix-scaling projections used by the coordinate descent steps.

All four routines rescale a positive kernel K as diag(u) K diag(v). They
differ in which side is pinned exactly to its target and which side is only
pulled toward it by a damped exponent theta = tau / (tau + 1/gamma):

- :func:`sinkhorn`: both sides pinned (classic alternating scaling).
- :func:`sr_right_projection`: rows pinned to ``a``, columns damped toward
  ``g_prev``.
- :func:`sr_left_projection`: columns pinned to ``b``, rows damped toward
  ``g_prev``.
- :func:`unbalanced_projection`: both sides damped.

Iteration runs in the plain domain for speed and hops to a log-domain loop
when any scaling vector leaves [1e-280, 1e280]; a kernel with a zero (or
negative) row or column surfaces as NonPositiveKernel either way. Routines
with a pinned side apply one last update to that side on exit, so the pinned
marginal of the returned matrix is exact to rounding while the opposite
residual keeps its bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveKernel, NotConverged, ShapeMismatch

RESCUE_HI = 1e280
RESCUE_LO = 1e-280
KERNEL_FLOOR = 1e-300


@dataclass(frozen=True)
class ScalingResult:
    """Outcome of a scaling loop.

    ``scaled`` is diag(u) K diag(v) (computed stably when the loop finished in
    log domain). ``final_residual`` is the routine's own stopping metric at
    exit: summed L1 marginal error for :func:`sinkhorn`, the step-normalized
    max log-movement of (u, v) for the damped projections.
    """

    scaled: np.ndarray
    u: np.ndarray
    v: np.ndarray
    iters: int
    final_residual: float


def _check_kernel(K: np.ndarray, n_target: int, m_target: int) -> np.ndarray:
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2:
        raise ShapeMismatch(f"kernel must be 2-d, got shape {K.shape}")
    if K.shape != (n_target, m_target):
        raise ShapeMismatch(
            f"kernel shape {K.shape} does not match targets ({n_target}, {m_target})"
        )
    return K


def _as_target(x, size_name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch(f"{size_name} must be 1-d, got shape {x.shape}")
    return x


def _theta(gamma: float, tau: float) -> float:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau!r}")
    if math.isinf(tau):
        return 1.0
    return tau / (tau + 1.0 / gamma)


def _needs_rescue(x: np.ndarray) -> bool:
    if not np.all(np.isfinite(x)):
        return True
    if x.size == 0:
        return False
    if x.max() > RESCUE_HI:
        return True
    pos = x[x > 0]
    return bool(pos.size) and pos.min() < RESCUE_LO


def _log_kernel(K: np.ndarray) -> np.ndarray:
    if (K < 0).any():
        raise NonPositiveKernel("kernel has negative entries")
    with np.errstate(divide="ignore"):
        return np.log(K)


def _log_of(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _lse_axis1(z: np.ndarray) -> np.ndarray:
    # Max-shifted log-sum-exp over rows. Hand-rolled: the generic scipy
    # version spends more time in dtype plumbing than arithmetic on the
    # small matrices the inner loops hammer.
    m = np.max(z, axis=1)
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return shift + np.log(np.exp(z - shift[:, None]).sum(axis=1))


def _lse_rows(log_K: np.ndarray, lv: np.ndarray) -> np.ndarray:
    s = _lse_axis1(log_K + lv[None, :])
    if np.isposinf(s).any() or np.isnan(s).any():
        raise NonPositiveKernel("kernel row sums are not finite in log domain")
    return s


def _lse_cols(log_K: np.ndarray, lu: np.ndarray) -> np.ndarray:
    s = _lse_axis1(log_K.T + lu[None, :])
    if np.isposinf(s).any() or np.isnan(s).any():
        raise NonPositiveKernel("kernel column sums are not finite in log domain")
    return s


def _log_update(log_target: np.ndarray, lse: np.ndarray, exponent: float) -> np.ndarray:
    out = exponent * (log_target - lse)
    # A zero target pins its entry to zero no matter what the kernel says;
    # without this, log(0) - (-inf) turns dead rows into NaN.
    out[np.isneginf(log_target)] = -np.inf
    dead = np.isposinf(out)
    if dead.any():
        if exponent == 1.0:
            raise NonPositiveKernel(
                "scaling diverged: kernel has an effectively zero row or column "
                "with non-zero target mass"
            )
        # On a KL-damped side a zero kernel row is a valid relaxed optimum:
        # the row stays zero (finite penalty) and its potential is pure
        # gauge, so pick a stable finite value.
        out[dead] = 0.0
    return out


def _max_log_ratio(prev: np.ndarray, curr: np.ndarray) -> float:
    """sup-norm of log(prev/curr), counting 0 -> 0 as no movement."""
    if prev.size == 0:
        return 0.0
    both_zero = (prev == 0) & (curr == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(np.log(prev / curr))
    r = np.where(both_zero, 0.0, r)
    return float(np.max(r))


def _max_abs_diff(prev: np.ndarray, curr: np.ndarray) -> float:
    if prev.size == 0:
        return 0.0
    d = np.abs(prev - curr)
    d = np.where(np.isnan(d), 0.0, d)  # -inf minus -inf: a zero entry stayed zero
    return float(np.max(d))


def _guarded_matvec(K: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, bool]:
    """K @ x plus a flag asking for the log-domain rescue path."""
    y = K @ x
    bad = not np.all(np.isfinite(y)) or (y.size and y.min() < KERNEL_FLOOR)
    return y, bad


def _start_vector(x0, size: int, name: str) -> np.ndarray:
    """Validate a warm-start scaling vector, falling back to all-ones.

    A warm start is only an accelerator; any entry that is non-finite,
    non-positive, or outside the plain-domain window gets the whole vector
    replaced by ones rather than poisoning the loop.
    """
    if x0 is None:
        return np.ones(size)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (size,):
        raise ShapeMismatch(f"{name} must have shape ({size},), got {x0.shape}")
    good = np.isfinite(x0) & (x0 >= RESCUE_LO) & (x0 <= RESCUE_HI)
    if not good.all():
        return np.ones(size)
    return x0.copy()


# ---------------------------------------------------------------------------
# Balanced scaling


def sinkhorn(
    K: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    delta: float,
    max_iter: int = 1000,
    u0: np.ndarray | None = None,
    v0: np.ndarray | None = None,
) -> ScalingResult:
    """Scale K so that row sums match ``a`` and column sums match ``b``.

    Stops when the summed L1 marginal residual drops to ``delta`` or below,
    then re-solves the row side once so row sums are exact to rounding; the
    column residual inherits the row residual's bound. On hitting ``max_iter``
    raises NotConverged with the best-effort result attached. ``u0``/``v0``
    warm-start the scaling vectors; the fixed point is unique, so they change
    iteration counts, never the converged answer.
    """
    a = _as_target(a, "a")
    b = _as_target(b, "b")
    K = _check_kernel(K, a.size, b.size)
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    u = _start_vector(u0, a.size, "u0")
    v = _start_vector(v0, b.size, "v0")
    it = 0
    residual = np.inf
    rescue = False
    Kv, bad = _guarded_matvec(K, v)
    if bad or _needs_rescue(u) or _needs_rescue(v):
        rescue = True
    while not rescue and it < max_iter:
        it += 1
        u = a / Kv
        KTu, bad_t = _guarded_matvec(K.T, u)
        if bad_t:
            rescue = True
            break
        v = b / KTu
        Kv, bad = _guarded_matvec(K, v)
        if bad or _needs_rescue(u) or _needs_rescue(v):
            rescue = True
            break
        residual = float(np.abs(u * Kv - a).sum() + np.abs(v * KTu - b).sum())
        if residual <= delta:
            break
    if rescue:
        return _sinkhorn_log(K, a, b, delta, max_iter, u, v, it)
    u = a / Kv  # terminal pinned-side update
    scaled = (u[:, None] * K) * v[None, :]
    final = float(
        np.abs(scaled.sum(axis=1) - a).sum() + np.abs(scaled.sum(axis=0) - b).sum()
    )
    result = ScalingResult(scaled=scaled, u=u, v=v, iters=it, final_residual=final)
    if residual > delta:
        raise NotConverged(
            f"sinkhorn residual {final:.3e} > delta={delta:g} after {it} iterations",
            residual=final,
            iters=it,
            result=result,
        )
    return result


def _sinkhorn_log(
    K: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    delta: float,
    max_iter: int,
    u: np.ndarray,
    v: np.ndarray,
    start_iter: int,
) -> ScalingResult:
    log_K = _log_kernel(K)
    log_a = _log_of(a)
    log_b = _log_of(b)
    lu = _log_of(np.where(np.isfinite(u), np.maximum(u, 0.0), 1.0))
    lv = _log_of(np.where(np.isfinite(v), np.maximum(v, 0.0), 1.0))
    it = start_iter
    residual = np.inf
    while it < max_iter:
        it += 1
        lu = _log_update(log_a, _lse_rows(log_K, lv), 1.0)
        lv = _log_update(log_b, _lse_cols(log_K, lu), 1.0)
        row = np.exp(lu + _lse_rows(log_K, lv))
        col = np.exp(lv + _lse_cols(log_K, lu))
        residual = float(np.abs(row - a).sum() + np.abs(col - b).sum())
        if residual <= delta:
            break
    lu = _log_update(log_a, _lse_rows(log_K, lv), 1.0)
    scaled = np.exp(log_K + lu[:, None] + lv[None, :])
    with np.errstate(over="ignore"):
        u_out = np.exp(lu)
        v_out = np.exp(lv)
    final = float(
        np.abs(scaled.sum(axis=1) - a).sum() + np.abs(scaled.sum(axis=0) - b).sum()
    )
    result = ScalingResult(scaled=scaled, u=u_out, v=v_out, iters=it, final_residual=final)
    if residual > delta:
        raise NotConverged(
            f"sinkhorn (log domain) residual {final:.3e} > delta={delta:g} "
            f"after {it} iterations",
            residual=final,
            iters=it,
            result=result,
        )
    return result


# ---------------------------------------------------------------------------
# Damped scaling (shared engine for the three relaxed projections)


def _relaxed_engine(
    K: np.ndarray,
    gamma: float,
    exp_u: float,
    exp_v: float,
    target_u: np.ndarray,
    target_v: np.ndarray,
    delta: float,
    max_iter: int,
    terminal: str | None,
    label: str,
    u0: np.ndarray | None = None,
    v0: np.ndarray | None = None,
) -> ScalingResult:
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    n, m = K.shape
    u = _start_vector(u0, n, "u0")
    v = _start_vector(v0, m, "v0")
    it = 0
    movement = np.inf
    rescue = False
    while it < max_iter:
        it += 1
        Kv, bad = _guarded_matvec(K, v)
        if bad:
            rescue = True
            break
        with np.errstate(invalid="ignore"):
            u_new = target_u / Kv if exp_u == 1.0 else (target_u / Kv) ** exp_u
        KTu, bad_t = _guarded_matvec(K.T, u_new)
        if bad_t or _needs_rescue(u_new):
            rescue = True
            break
        with np.errstate(invalid="ignore"):
            v_new = target_v / KTu if exp_v == 1.0 else (target_v / KTu) ** exp_v
        if _needs_rescue(v_new):
            rescue = True
            break
        movement = max(_max_log_ratio(u, u_new), _max_log_ratio(v, v_new)) / gamma
        u, v = u_new, v_new
        if movement < delta:
            break
    if rescue:
        return _relaxed_log(
            K, gamma, exp_u, exp_v, target_u, target_v, delta, max_iter,
            terminal, label, u, v, it,
        )
    if terminal == "u":
        Kv, bad = _guarded_matvec(K, v)
        if bad:
            return _relaxed_log(
                K, gamma, exp_u, exp_v, target_u, target_v, delta, max_iter,
                terminal, label, u, v, it,
            )
        u = target_u / Kv
    elif terminal == "v":
        KTu, bad = _guarded_matvec(K.T, u)
        if bad:
            return _relaxed_log(
                K, gamma, exp_u, exp_v, target_u, target_v, delta, max_iter,
                terminal, label, u, v, it,
            )
        v = target_v / KTu
    scaled = (u[:, None] * K) * v[None, :]
    result = ScalingResult(
        scaled=scaled, u=u, v=v, iters=it, final_residual=float(movement)
    )
    if not movement < delta:
        raise NotConverged(
            f"{label} movement {movement:.3e} >= delta={delta:g} after {it} iterations",
            residual=float(movement),
            iters=it,
            result=result,
        )
    return result


def _relaxed_log(
    K: np.ndarray,
    gamma: float,
    exp_u: float,
    exp_v: float,
    target_u: np.ndarray,
    target_v: np.ndarray,
    delta: float,
    max_iter: int,
    terminal: str | None,
    label: str,
    u: np.ndarray,
    v: np.ndarray,
    start_iter: int,
) -> ScalingResult:
    log_K = _log_kernel(K)
    log_tu = _log_of(target_u)
    log_tv = _log_of(target_v)
    lu = _log_of(np.where(np.isfinite(u), np.maximum(u, 0.0), 1.0))
    lv = _log_of(np.where(np.isfinite(v), np.maximum(v, 0.0), 1.0))
    it = start_iter
    movement = np.inf
    while it < max_iter:
        it += 1
        lu_new = _log_update(log_tu, _lse_rows(log_K, lv), exp_u)
        lv_new = _log_update(log_tv, _lse_cols(log_K, lu_new), exp_v)
        movement = max(_max_abs_diff(lu, lu_new), _max_abs_diff(lv, lv_new)) / gamma
        lu, lv = lu_new, lv_new
        if movement < delta:
            break
    if terminal == "u":
        lu = _log_update(log_tu, _lse_rows(log_K, lv), 1.0)
    elif terminal == "v":
        lv = _log_update(log_tv, _lse_cols(log_K, lu), 1.0)
    scaled = np.exp(log_K + lu[:, None] + lv[None, :])
    with np.errstate(over="ignore"):
        u_out = np.exp(lu)
        v_out = np.exp(lv)
    result = ScalingResult(
        scaled=scaled, u=u_out, v=v_out, iters=it, final_residual=float(movement)
    )
    if not movement < delta:
        raise NotConverged(
            f"{label} (log domain) movement {movement:.3e} >= delta={delta:g} "
            f"after {it} iterations",
            residual=float(movement),
            iters=it,
            result=result,
        )
    return result


def sr_right_projection(
    K: np.ndarray,
    gamma: float,
    tau: float,
    a: np.ndarray,
    g_prev: np.ndarray,
    delta: float,
    max_iter: int = 50,
    u0: np.ndarray | None = None,
    v0: np.ndarray | None = None,
) -> ScalingResult:
    """Pin rows to ``a``; pull columns toward ``g_prev`` with damping tau.

    The column update is exponentiated by theta = tau/(tau + 1/gamma), so
    tau = 0 degenerates to a pure row normalization and large tau approaches
    :func:`sinkhorn`. Stops when the per-step dual movement
    max(||log u/u'||_inf, ||log v/v'||_inf)/gamma falls below ``delta``; a
    final row update makes row sums exact to rounding. ``u0``/``v0``
    warm-start the scaling vectors.
    """
    a = _as_target(a, "a")
    g_prev = _as_target(g_prev, "g_prev")
    K = _check_kernel(K, a.size, g_prev.size)
    theta = _theta(gamma, tau)
    return _relaxed_engine(
        K, gamma, 1.0, theta, a, g_prev, delta, max_iter, "u",
        "sr-right projection", u0, v0,
    )


def sr_left_projection(
    K: np.ndarray,
    gamma: float,
    tau: float,
    g_prev: np.ndarray,
    b: np.ndarray,
    delta: float,
    max_iter: int = 50,
    u0: np.ndarray | None = None,
    v0: np.ndarray | None = None,
) -> ScalingResult:
    """Mirror of :func:`sr_right_projection`: columns pinned to ``b``, rows
    pulled toward ``g_prev``. The final update re-solves the column side.
    """
    g_prev = _as_target(g_prev, "g_prev")
    b = _as_target(b, "b")
    K = _check_kernel(K, g_prev.size, b.size)
    theta = _theta(gamma, tau)
    return _relaxed_engine(
        K, gamma, theta, 1.0, g_prev, b, delta, max_iter, "v",
        "sr-left projection", u0, v0,
    )


def unbalanced_projection(
    K: np.ndarray,
    gamma: float,
    tau: float,
    a: np.ndarray,
    b: np.ndarray,
    delta: float,
    max_iter: int = 50,
    u0: np.ndarray | None = None,
    v0: np.ndarray | None = None,
) -> ScalingResult:
    """Damp both sides toward their targets with the same tau.

    Neither side is pinned, so no terminal update is applied; with tau = 0 the
    kernel comes back unchanged, and tau -> inf recovers balanced scaling
    (minus the exact-row finish).
    """
    a = _as_target(a, "a")
    b = _as_target(b, "b")
    K = _check_kernel(K, a.size, b.size)
    theta = _theta(gamma, tau)
    return _relaxed_engine(
        K, gamma, theta, theta, a, b, delta, max_iter, None,
        "unbalanced projection", u0, v0,
    )
