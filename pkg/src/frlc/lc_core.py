"""Latent-coupling factorization: data model, feasibility, factored plan ops.

A transport plan between marginals ``a`` (length n) and ``b`` (length m) is
held in factored form

    P = Q · diag(1/g_Q) · T · diag(1/g_R) · Rᵀ

where ``Q`` is n×r1, ``R`` is m×r2, ``T`` is the small r1×r2 latent coupling,
and ``g_Q = Qᵀ1``, ``g_R = Rᵀ1`` are the inner marginals. Everything in this
module works on the factors; the n×m matrix is only materialized by
:func:`reconstruct_plan` when explicitly asked for.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateMarginal, InvalidRank, ShapeMismatch

# Inner-marginal entries below this are treated as a degenerate factorization
# (a collapsed latent cluster) rather than silently divided through.
DEGENERATE_FLOOR = 1e-15
# Hard floor applied inside divisions so no inf can escape even on the edge.
DIVISION_FLOOR = 1e-300

MODES = ("balanced", "unbalanced", "sr-left", "sr-right")
OBJECTIVES = ("w", "gw", "fgw")


def _as_readonly(x, name: str, ndim: int) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, order="C", copy=True)
    if arr.ndim != ndim:
        raise ShapeMismatch(f"{name} must be {ndim}-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def validate_marginal(w, name: str = "marginal", tight: bool = False) -> np.ndarray:
    """Check a marginal vector and return it as a read-only float64 array.

    Args:
        w: Length-n vector of non-negative masses.
        name: Label used in error messages.
        tight: When true the entries must additionally sum to 1 within 1e-12
            (the balanced / semi-relaxed-tight role).
    """
    arr = _as_readonly(w, name, ndim=1)
    if arr.size == 0:
        raise ShapeMismatch(f"{name} is empty")
    if not np.all(arr >= 0):
        raise ValueError(f"{name} has negative entries")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    if tight and abs(float(arr.sum()) - 1.0) > 1e-12:
        raise ValueError(f"{name} must sum to 1 within 1e-12, got {arr.sum()!r}")
    return arr


def safe_reciprocal(g: np.ndarray, name: str = "inner marginal") -> np.ndarray:
    """1/g with the degenerate-entry policy applied.

    Raises:
        DegenerateMarginal: any entry below ``DEGENERATE_FLOOR``.
    """
    g = np.asarray(g, dtype=np.float64)
    if float(g.min(initial=np.inf)) < DEGENERATE_FLOOR:
        raise DegenerateMarginal(
            f"{name} has entries below {DEGENERATE_FLOOR:g}; "
            "the factorization has a collapsed latent cluster"
        )
    return 1.0 / np.maximum(g, DIVISION_FLOOR)


def inner_marginals(Q: np.ndarray, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column masses (g_Q, g_R) = (Qᵀ1, Rᵀ1) of the two outer factors."""
    Q = np.asarray(Q, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    return Q.sum(axis=0), R.sum(axis=0)


@dataclass(frozen=True)
class LcFactors:
    """The factor triple (Q, R, T) with cached inner marginals.

    Immutable after construction; the arrays are defensive read-only copies.
    ``gQ``/``gR`` are recomputed from Q/R here, never passed in, so they can
    not drift out of sync with the factors.

    Attributes:
        Q: n×r1 non-negative sub-coupling for the first marginal.
        R: m×r2 non-negative sub-coupling for the second marginal.
        T: r1×r2 non-negative latent coupling.
        gQ: cached column sums of Q, length r1.
        gR: cached column sums of R, length r2.
    """

    Q: np.ndarray
    R: np.ndarray
    T: np.ndarray
    gQ: np.ndarray = field(init=False)
    gR: np.ndarray = field(init=False)

    def __post_init__(self):
        Q = _as_readonly(self.Q, "Q", ndim=2)
        R = _as_readonly(self.R, "R", ndim=2)
        T = _as_readonly(self.T, "T", ndim=2)
        if T.shape != (Q.shape[1], R.shape[1]):
            raise ShapeMismatch(
                f"T must be {Q.shape[1]}x{R.shape[1]} to couple Q and R, "
                f"got {T.shape[0]}x{T.shape[1]}"
            )
        for name, arr in (("Q", Q), ("R", R), ("T", T)):
            if not np.all(arr >= 0):
                raise ValueError(f"{name} has negative entries")
        gQ = Q.sum(axis=0)
        gR = R.sum(axis=0)
        if float(gQ.min()) < DEGENERATE_FLOOR or float(gR.min()) < DEGENERATE_FLOOR:
            raise DegenerateMarginal(
                "a factor column carries (numerically) zero mass; "
                f"inner marginals must stay above {DEGENERATE_FLOOR:g}"
            )
        gQ.setflags(write=False)
        gR.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "gQ", gQ)
        object.__setattr__(self, "gR", gR)

    @property
    def shape(self) -> tuple[int, int]:
        return self.Q.shape[0], self.R.shape[0]

    @property
    def ranks(self) -> tuple[int, int]:
        return self.T.shape

    @cached_property
    def X(self) -> np.ndarray:
        """The rescaled latent coupling diag(1/g_Q) · T · diag(1/g_R).

        Satisfies X·g_R = T·1/g_Q and Xᵀ·g_Q = Tᵀ·1/g_R, so a T feasible for
        (g_Q, g_R) makes Q·X·Rᵀ feasible for the outer marginals.
        """
        X = (self.T * safe_reciprocal(self.gQ, "gQ")[:, None]) * safe_reciprocal(
            self.gR, "gR"
        )[None, :]
        X.setflags(write=False)
        return X


def reconstruct_plan(f: LcFactors) -> np.ndarray:
    """Materialize the dense n×m plan Q·diag(1/g_Q)·T·diag(1/g_R)·Rᵀ.

    Only for inspection and desk-scale tests; every solver path works on the
    factors instead.
    """
    return (f.Q @ f.X) @ f.R.T


def apply_plan(f: LcFactors, v: np.ndarray) -> np.ndarray:
    """P·v in O(n·r1 + r1·r2 + m·r2) without forming P."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (f.R.shape[0],):
        raise ShapeMismatch(f"v must have length {f.R.shape[0]}, got shape {v.shape}")
    return f.Q @ (f.X @ (f.R.T @ v))


def apply_plan_t(f: LcFactors, u: np.ndarray) -> np.ndarray:
    """Pᵀ·u, the transpose companion of :func:`apply_plan`."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (f.Q.shape[0],):
        raise ShapeMismatch(f"u must have length {f.Q.shape[0]}, got shape {u.shape}")
    return f.R @ (f.X.T @ (f.Q.T @ u))


def marginal_residuals(f: LcFactors, a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """L1 residuals (‖P·1 − a‖₁, ‖Pᵀ·1 − b‖₁) evaluated through the factors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = f.shape
    if a.shape != (n,) or b.shape != (m,):
        raise ShapeMismatch(
            f"marginals must have lengths {n} and {m}, got {a.shape} and {b.shape}"
        )
    left = apply_plan(f, np.ones(m))
    right = apply_plan_t(f, np.ones(n))
    return float(np.abs(left - a).sum()), float(np.abs(right - b).sum())


@dataclass(frozen=True)
class CostSpec:
    """Ground cost in dense or factored form, plus optional intra-domain costs.

    Exactly one of the linear representations may be set: dense ``C`` (n×m) or
    the factored pair ``(C1, C2)`` with C = C1·C2ᵀ (n×d and m×d). Both may be
    omitted for purely quadratic problems, which instead need the symmetric
    intra-domain matrices ``A`` (n×n) and ``B`` (m×m).
    """

    C: np.ndarray | None = None
    C1: np.ndarray | None = None
    C2: np.ndarray | None = None
    A: np.ndarray | None = None
    B: np.ndarray | None = None

    def __post_init__(self):
        if self.C is not None and (self.C1 is not None or self.C2 is not None):
            raise ShapeMismatch("dense C and factored (C1, C2) are mutually exclusive")
        if (self.C1 is None) != (self.C2 is None):
            raise ShapeMismatch("factored cost needs both C1 and C2")
        C = C1 = C2 = A = B = None
        if self.C is not None:
            C = _as_readonly(self.C, "C", ndim=2)
        if self.C1 is not None:
            C1 = _as_readonly(self.C1, "C1", ndim=2)
            C2 = _as_readonly(self.C2, "C2", ndim=2)
            if C1.shape[1] != C2.shape[1]:
                raise ShapeMismatch(
                    f"C1 and C2 must share a feature dimension, got "
                    f"{C1.shape[1]} and {C2.shape[1]}"
                )
        if self.A is not None:
            A = _as_readonly(self.A, "A", ndim=2)
            _check_intra(A, "A")
        if self.B is not None:
            B = _as_readonly(self.B, "B", ndim=2)
            _check_intra(B, "B")
        # A-only / B-only specs are legal carriers (the graph cost builders
        # hand back half a quadratic problem); shape resolution then waits
        # until a consumer that needs both sides asks for it.
        if C is not None or C1 is not None or (A is not None and B is not None):
            n, m = _cost_shape(C, C1, C2, A, B)
            if A is not None and A.shape[0] != n:
                raise ShapeMismatch(
                    f"A must be {n}x{n}, got {A.shape[0]}x{A.shape[1]}"
                )
            if B is not None and B.shape[0] != m:
                raise ShapeMismatch(
                    f"B must be {m}x{m}, got {B.shape[0]}x{B.shape[1]}"
                )
        elif A is None and B is None:
            raise ShapeMismatch("cost spec is empty: need C, (C1, C2), or (A, B)")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "C1", C1)
        object.__setattr__(self, "C2", C2)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def has_linear(self) -> bool:
        return self.C is not None or self.C1 is not None

    @property
    def has_intra(self) -> bool:
        return self.A is not None and self.B is not None

    @property
    def shape(self) -> tuple[int, int]:
        return _cost_shape(self.C, self.C1, self.C2, self.A, self.B)

    def apply(self, M: np.ndarray) -> np.ndarray:
        """C @ M without forming C in factored mode."""
        if self.C is not None:
            return self.C @ M
        if self.C1 is not None:
            return self.C1 @ (self.C2.T @ M)
        raise ShapeMismatch("no linear cost term present (need C or C1/C2)")

    def apply_t(self, M: np.ndarray) -> np.ndarray:
        """Cᵀ @ M without forming C in factored mode."""
        if self.C is not None:
            return self.C.T @ M
        if self.C1 is not None:
            return self.C2 @ (self.C1.T @ M)
        raise ShapeMismatch("no linear cost term present (need C or C1/C2)")

    @cached_property
    def A_sq(self) -> np.ndarray:
        """Elementwise square of A, cached for quadratic gradients."""
        if self.A is None:
            raise ShapeMismatch("A is not present")
        out = self.A * self.A
        out.setflags(write=False)
        return out

    @cached_property
    def B_sq(self) -> np.ndarray:
        if self.B is None:
            raise ShapeMismatch("B is not present")
        out = self.B * self.B
        out.setflags(write=False)
        return out


def _check_intra(M: np.ndarray, name: str) -> None:
    if M.shape[0] != M.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got {M.shape[0]}x{M.shape[1]}")
    if not np.all(M >= 0):
        raise ValueError(f"{name} has negative entries")
    scale = float(np.abs(M).max(initial=0.0))
    if scale > 0 and float(np.abs(M - M.T).max()) > 1e-8 * scale:
        raise ValueError(f"{name} must be symmetric")


def _cost_shape(C, C1, C2, A, B) -> tuple[int, int]:
    if C is not None:
        return C.shape
    if C1 is not None:
        return C1.shape[0], C2.shape[0]
    if A is not None and B is not None:
        return A.shape[0], B.shape[0]
    raise ShapeMismatch("cost spec is empty: need C, (C1, C2), or (A, B)")


@dataclass(frozen=True)
class ProblemSpec:
    """Full problem statement handed to the solver.

    Attributes:
        a: first marginal, length n (tight unless mode relaxes it).
        b: second marginal, length m.
        r1, r2: latent ranks, each in [1, min(n, m)].
        mode: "balanced", "unbalanced", "sr-left" (a relaxed) or
            "sr-right" (b relaxed).
        objective: "w", "gw", or "fgw".
        alpha: linear-term weight for "fgw", in (0, 1).
        gamma: base mirror-descent step; each block step is gamma divided by
            the block gradient's max-abs entry.
        tau: KL weight on relaxed marginals.
        tau2: KL weight for the second factor in unbalanced mode
            (defaults to tau).
        delta: inner projection tolerance.
        epsilon: outer stopping tolerance on the per-iteration movement
            measure.
        min_iter, max_iter: outer iteration bounds.
        max_inner_balanced, max_inner_relaxed: sweep caps for the inner
            scaling loops.
        seed: RNG seed for the random initialization.
    """

    a: np.ndarray
    b: np.ndarray
    r1: int
    r2: int | None = None
    mode: str = "balanced"
    objective: str = "w"
    alpha: float = 0.5
    gamma: float = 90.0
    tau: float = 75.0
    tau2: float | None = None
    delta: float = 1e-9
    epsilon: float = 1e-6
    min_iter: int = 25
    max_iter: int = 200
    max_inner_balanced: int = 1000
    max_inner_relaxed: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.objective not in OBJECTIVES:
            raise ValueError(
                f"objective must be one of {OBJECTIVES}, got {self.objective!r}"
            )
        a = validate_marginal(self.a, "a", tight=self.mode in ("balanced", "sr-right"))
        b = validate_marginal(self.b, "b", tight=self.mode in ("balanced", "sr-left"))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        r2 = self.r1 if self.r2 is None else self.r2
        object.__setattr__(self, "r1", int(self.r1))
        object.__setattr__(self, "r2", int(r2))
        cap = min(a.size, b.size)
        for name, r in (("r1", self.r1), ("r2", self.r2)):
            if not 1 <= r <= cap:
                raise InvalidRank(f"{name} must be in [1, {cap}], got {r}")
        if self.objective == "fgw" and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1) for fgw, got {self.alpha!r}")
        for name in ("gamma", "tau", "delta", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.tau2 is None:
            object.__setattr__(self, "tau2", float(self.tau))
        elif not self.tau2 > 0:
            raise ValueError(f"tau2 must be positive, got {self.tau2!r}")
        for name in ("min_iter", "max_iter", "max_inner_balanced", "max_inner_relaxed"):
            if not getattr(self, name) >= 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)!r}")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.size, self.b.size


def uniform_marginal(n: int) -> np.ndarray:
    """The uniform probability vector of length n."""
    if n < 1:
        raise ShapeMismatch(f"marginal length must be >= 1, got {n}")
    return np.full(n, 1.0 / n)


def primal_cost(f: LcFactors, c: CostSpec) -> float:
    """Linear transport cost ⟨C, P⟩ evaluated through the factors.

    Contracts as tr(Xᵀ·(Qᵀ·C·R)), so the factored cost never materializes an
    n×m product; with dense C the largest intermediate is C·R (n×r2).
    """
    if c.shape != f.shape:
        raise ShapeMismatch(
            f"cost shape {c.shape} does not match factor shape {f.shape}"
        )
    M = f.Q.T @ c.apply(f.R)  # (r1, r2)
    return float((f.X * M).sum())
