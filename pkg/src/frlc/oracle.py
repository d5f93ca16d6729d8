"""Desk-scale ground-truth references used by the test suite.

Nothing here shares code with the solver: the exact solver enumerates
permutations (or calls the augmenting-path assignment routine), the entropic
reference is a self-contained log-domain scaling loop, and the quadratic cost
is an honest quadruple loop. Slow on purpose; sizes are capped.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .errors import NotConverged, ShapeMismatch, TooLarge

EXHAUSTIVE_MAX_N = 10
BRUTE_GW_MAX_N = 30


@dataclass(frozen=True)
class ExactResult:
    """A reference optimum: scalar cost and the dense plan achieving it."""

    cost: float
    plan: np.ndarray


def _perm_cost(C: np.ndarray, perm: np.ndarray) -> float:
    """Cost of a permutation plan under uniform marginals.

    Both search paths report through this one summation so that their results
    are comparable exactly, not just to rounding.
    """
    n = C.shape[0]
    return float(C[np.arange(n), perm].sum() / n)


def _perm_plan(n: int, perm: np.ndarray) -> np.ndarray:
    P = np.zeros((n, n))
    P[np.arange(n), perm] = 1.0 / n
    return P


def exact_ot_uniform(C: np.ndarray, method: str = "auto") -> ExactResult:
    """Exact optimal transport between uniform marginals on a square cost.

    By Birkhoff's theorem the optimum is a permutation, so the problem is an
    assignment. Two independent paths are provided: ``"exhaustive"`` tries
    every permutation (n <= 10) and ``"assignment"`` uses the augmenting-path
    solver; ``"auto"`` picks the assignment path.

    Raises:
        TooLarge: exhaustive path requested for n > 10.
        ShapeMismatch: non-square cost.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ShapeMismatch(f"expected a square cost matrix, got shape {C.shape}")
    n = C.shape[0]
    if method == "auto":
        method = "assignment"
    if method == "assignment":
        rows, cols = linear_sum_assignment(C)
        perm = cols[np.argsort(rows)]
    elif method == "exhaustive":
        if n > EXHAUSTIVE_MAX_N:
            raise TooLarge(
                f"exhaustive search is capped at n={EXHAUSTIVE_MAX_N}, got n={n}"
            )
        best_perm = None
        best_cost = np.inf
        for cand in itertools.permutations(range(n)):
            cand = np.asarray(cand)
            cost = _perm_cost(C, cand)
            if cost < best_cost:
                best_cost = cost
                best_perm = cand
        perm = best_perm
    else:
        raise ValueError(f"unknown method {method!r}")
    return ExactResult(cost=_perm_cost(C, perm), plan=_perm_plan(n, perm))


def entropic_reference(
    C: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    epsilon_reg: float,
    max_iter: int = 500_000,
) -> ExactResult:
    """Entropy-regularized reference plan via log-domain scaling.

    Runs the kernel exp(-C/eps) fixed point entirely in log space until the
    summed L1 marginal residual drops below 1e-12, so it stays usable at
    small regularization where the plain-domain kernel underflows.

    Raises:
        NotConverged: iteration cap hit first (carries the best-effort result).
    """
    C = np.asarray(C, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = C.shape
    if a.shape != (n,) or b.shape != (m,):
        raise ShapeMismatch(
            f"marginals must have lengths {n} and {m}, got {a.shape} and {b.shape}"
        )
    if not epsilon_reg > 0:
        raise ValueError(f"epsilon_reg must be positive, got {epsilon_reg!r}")
    log_K = -C / epsilon_reg
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)
    lu = np.zeros(n)
    lv = np.zeros(m)
    tol = 1e-12
    residual = np.inf
    for it in range(1, max_iter + 1):
        lu = log_a - logsumexp(log_K + lv[None, :], axis=1)
        lv = log_b - logsumexp(log_K.T + lu[None, :], axis=1)
        row = np.exp(lu + logsumexp(log_K + lv[None, :], axis=1))
        col = np.exp(lv + logsumexp(log_K.T + lu[None, :], axis=1))
        residual = float(np.abs(row - a).sum() + np.abs(col - b).sum())
        if residual <= tol:
            break
    plan = np.exp(log_K + lu[:, None] + lv[None, :])
    result = ExactResult(cost=float((C * plan).sum()), plan=plan)
    if residual > tol:
        raise NotConverged(
            f"entropic reference residual {residual:.3e} > {tol:g} "
            f"after {max_iter} iterations",
            residual=residual,
            iters=max_iter,
            result=result,
        )
    return result


def brute_gw_cost(A: np.ndarray, B: np.ndarray, P: np.ndarray) -> float:
    """The quadratic distortion sum_{ijkl} (A_ik - B_jl)^2 P_ij P_kl, literally.

    Quadruple loop in Python; the definitional ground truth for the factored
    quadratic-cost evaluation. Capped at 30x30.

    Raises:
        TooLarge: either side exceeds 30 points.
        ShapeMismatch: P inconsistent with A and B.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    n, m = P.shape
    if A.shape != (n, n) or B.shape != (m, m):
        raise ShapeMismatch(
            f"A must be {n}x{n} and B {m}x{m}, got {A.shape} and {B.shape}"
        )
    if max(n, m) > BRUTE_GW_MAX_N:
        raise TooLarge(f"quadruple loop is capped at {BRUTE_GW_MAX_N} points a side")
    total = 0.0
    for i in range(n):
        for j in range(m):
            pij = P[i, j]
            if pij == 0.0:
                continue
            for k in range(n):
                for l in range(m):
                    d = A[i, k] - B[j, l]
                    total += d * d * pij * P[k, l]
    return total
