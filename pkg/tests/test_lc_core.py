import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frlc.errors import DegenerateMarginal, ShapeMismatch
from frlc.lc_core import (
    CostSpec,
    LcFactors,
    ProblemSpec,
    apply_plan,
    apply_plan_t,
    inner_marginals,
    marginal_residuals,
    primal_cost,
    reconstruct_plan,
    uniform_marginal,
)


# ---------------------------------------------------------------- oracles

def plan_by_quadruple_product(f):
    """Element-wise four-factor product, no matrix algebra."""
    n, r1 = f.Q.shape
    m, r2 = f.R.shape
    P = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(r1):
                for l in range(r2):
                    s += f.Q[i, k] / f.gQ[k] * f.T[k, l] / f.gR[l] * f.R[j, l]
            P[i, j] = s
    return P


def cost_by_double_loop(C, P):
    s = 0.0
    for i in range(C.shape[0]):
        for j in range(C.shape[1]):
            s += C[i, j] * P[i, j]
    return s


def feasible_factors(rng, n, m, r1, r2, a=None, b=None):
    """Rows of Q split a_i over r1 columns; T is the independence coupling."""
    a = uniform_marginal(n) if a is None else a
    b = uniform_marginal(m) if b is None else b
    Q = rng.dirichlet(np.ones(r1), size=n) * a[:, None]
    R = rng.dirichlet(np.ones(r2), size=m) * b[:, None]
    gQ, gR = inner_marginals(Q, R)
    T = np.outer(gQ, gR) / gR.sum()
    return LcFactors(Q=Q, R=R, T=T)


# ---------------------------------------------------------------- inner_marginals

def test_inner_marginals_column_sums():
    Q = np.array([[0.5, 0.0], [0.0, 0.5]])
    gQ, gR = inner_marginals(Q, Q)
    assert np.array_equal(gQ, [0.5, 0.5])
    assert np.array_equal(gR, [0.5, 0.5])


def test_inner_marginals_zero_matrix():
    gQ, _ = inner_marginals(np.zeros((3, 2)), np.ones((2, 2)))
    assert np.array_equal(gQ, [0.0, 0.0])


def test_inner_marginals_matches_double_loop():
    rng = np.random.default_rng(7)
    Q = rng.uniform(size=(5, 3))
    R = rng.uniform(size=(4, 3))
    gQ, gR = inner_marginals(Q, R)
    for k in range(3):
        s = 0.0
        for i in range(5):
            s += Q[i, k]
        assert abs(gQ[k] - s) <= 1e-15
        s = 0.0
        for j in range(4):
            s += R[j, k]
        assert abs(gR[k] - s) <= 1e-15


# ---------------------------------------------------------------- LcFactors

def test_factors_cache_coherent_and_readonly():
    rng = np.random.default_rng(0)
    f = feasible_factors(rng, 4, 5, 2, 3)
    assert np.allclose(f.gQ, f.Q.sum(axis=0), atol=0)
    assert np.allclose(f.gR, f.R.sum(axis=0), atol=0)
    with pytest.raises(ValueError):
        f.Q[0, 0] = 1.0


def test_factors_zero_column_rejected():
    Q = np.array([[0.5, 0.0], [0.5, 0.0]])
    R = np.eye(2) * 0.5
    T = np.full((2, 2), 0.25)
    with pytest.raises(DegenerateMarginal):
        LcFactors(Q=Q, R=R, T=T)


def test_factors_negative_entry_rejected():
    Q = np.array([[0.5, -0.1], [0.5, 0.6]])
    R = np.eye(2) * 0.5
    T = np.full((2, 2), 0.25)
    with pytest.raises(ValueError):
        LcFactors(Q=Q, R=R, T=T)


def test_nonsquare_latent_coupling_is_first_class():
    rng = np.random.default_rng(1)
    f = feasible_factors(rng, 6, 4, 3, 2)
    assert f.T.shape == (3, 2)
    P = reconstruct_plan(f)
    assert P.shape == (6, 4)


# ---------------------------------------------------------------- reconstruct_plan

def test_reconstruct_scalar_identity():
    f = LcFactors(Q=np.array([[1.0]]), R=np.array([[1.0]]), T=np.array([[1.0]]))
    assert np.array_equal(reconstruct_plan(f), [[1.0]])


def test_reconstruct_independence_coupling():
    a = np.array([0.25, 0.75])
    b = np.array([0.4, 0.1, 0.5])
    f = LcFactors(Q=np.diag(a), R=np.diag(b), T=np.outer(a, b))
    assert np.allclose(reconstruct_plan(f), np.outer(a, b), atol=1e-15)


def test_reconstruct_matches_quadruple_product():
    rng = np.random.default_rng(3)
    f = feasible_factors(rng, 4, 5, 2, 2)
    assert np.allclose(reconstruct_plan(f), plan_by_quadruple_product(f), atol=1e-14)


def test_reconstruct_rank_bounded_by_latent_rank():
    rng = np.random.default_rng(4)
    f = feasible_factors(rng, 12, 11, 3, 2)
    sv = np.linalg.svd(reconstruct_plan(f), compute_uv=False)
    assert (sv[2:] <= 1e-10 * sv[0]).all()


# ---------------------------------------------------------------- apply_plan

def test_apply_plan_zero_vector():
    rng = np.random.default_rng(5)
    f = feasible_factors(rng, 4, 5, 2, 2)
    assert np.array_equal(apply_plan(f, np.zeros(5)), np.zeros(4))


def test_apply_plan_ones_recovers_left_marginal():
    rng = np.random.default_rng(6)
    a = uniform_marginal(5)
    f = feasible_factors(rng, 5, 7, 3, 2, a=a)
    assert np.allclose(apply_plan(f, np.ones(7)), a, atol=1e-12)


def test_apply_plan_matches_dense_product():
    rng = np.random.default_rng(8)
    f = feasible_factors(rng, 6, 7, 3, 3)
    v = rng.standard_normal(7)
    u = rng.standard_normal(6)
    P = reconstruct_plan(f)
    assert np.allclose(apply_plan(f, v), P @ v, atol=1e-12)
    assert np.allclose(apply_plan_t(f, u), P.T @ u, atol=1e-12)


# ---------------------------------------------------------------- primal_cost

def test_primal_cost_zero_cost():
    rng = np.random.default_rng(9)
    f = feasible_factors(rng, 4, 4, 2, 2)
    assert primal_cost(f, CostSpec(C=np.zeros((4, 4)))) == 0.0


def test_primal_cost_scalar():
    f = LcFactors(Q=np.array([[1.0]]), R=np.array([[1.0]]), T=np.array([[1.0]]))
    assert primal_cost(f, CostSpec(C=np.array([[2.5]]))) == pytest.approx(2.5)


def test_primal_cost_dense_matches_double_loop_and_factored():
    rng = np.random.default_rng(10)
    f = feasible_factors(rng, 5, 6, 2, 3)
    C1 = rng.uniform(size=(5, 4))
    C2 = rng.uniform(size=(6, 4))
    dense = CostSpec(C=C1 @ C2.T)
    factored = CostSpec(C1=C1, C2=C2)
    P = reconstruct_plan(f)
    oracle = cost_by_double_loop(C1 @ C2.T, P)
    assert primal_cost(f, dense) == pytest.approx(oracle, abs=1e-12)
    assert primal_cost(f, factored) == pytest.approx(oracle, rel=1e-10)


# ---------------------------------------------------------------- marginal_residuals

def test_residuals_zero_for_product_coupling():
    a = np.array([0.25, 0.75])
    b = np.array([0.4, 0.1, 0.5])
    f = LcFactors(Q=np.diag(a), R=np.diag(b), T=np.outer(a, b))
    left, right = marginal_residuals(f, a, b)
    assert left <= 1e-15 and right <= 1e-15


def test_left_residual_bounded_by_t_row_perturbation():
    rng = np.random.default_rng(11)
    a = uniform_marginal(5)
    b = uniform_marginal(6)
    f = feasible_factors(rng, 5, 6, 2, 2, a=a, b=b)
    e = np.array([[0.01, -0.004], [0.0, 0.002]])
    g = LcFactors(Q=f.Q, R=f.R, T=np.maximum(f.T + e, 0.0))
    left, _ = marginal_residuals(g, a, b)
    t_row_err = np.abs(g.T.sum(axis=1) - g.gQ).sum()
    assert left <= t_row_err + 1e-14


def test_exact_feasibility_propagates():
    # Q rows summing to a and T rows summing to gQ force P1 = a identically.
    rng = np.random.default_rng(12)
    a = rng.dirichlet(np.ones(6))
    f = feasible_factors(rng, 6, 4, 3, 3, a=a)
    assert np.abs(apply_plan(f, np.ones(4)) - a).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_residual_propagation_bound_property(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 8)), int(rng.integers(2, 8))
    r1, r2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    a = rng.dirichlet(np.ones(n))
    b = rng.dirichlet(np.ones(m))
    Q = rng.dirichlet(np.ones(r1), size=n) * a[:, None]
    R = rng.dirichlet(np.ones(r2), size=m) * b[:, None]
    T = rng.uniform(0.2, 1.0, size=(r1, r2))
    T /= T.sum()
    f = LcFactors(Q=Q, R=R, T=T)
    left, right = marginal_residuals(f, a, b)
    t_row = np.abs(f.T.sum(axis=1) - f.gQ).sum()
    t_col = np.abs(f.T.sum(axis=0) - f.gR).sum()
    q_row = np.abs(f.Q.sum(axis=1) - a).sum()
    r_row = np.abs(f.R.sum(axis=1) - b).sum()
    assert left <= t_row + q_row + 1e-10
    assert right <= t_col + r_row + 1e-10


# ---------------------------------------------------------------- CostSpec

def test_costspec_dense_and_factored_exclusive():
    C = np.ones((2, 3))
    with pytest.raises(ShapeMismatch):
        CostSpec(C=C, C1=np.ones((2, 1)), C2=np.ones((3, 1)))


def test_costspec_factored_needs_both_halves():
    with pytest.raises(ShapeMismatch):
        CostSpec(C1=np.ones((2, 1)))


def test_costspec_empty_rejected():
    with pytest.raises(ShapeMismatch):
        CostSpec()


def test_costspec_intra_must_be_symmetric():
    A = np.array([[0.0, 1.0], [0.5, 0.0]])
    with pytest.raises(ValueError):
        CostSpec(A=A, B=np.eye(2))


def test_costspec_half_intra_spec_allowed():
    # Graph cost builders return only the source side; shape resolution
    # waits for a consumer that needs both.
    spec = CostSpec(A=np.eye(3))
    assert spec.has_intra is False
    assert spec.A.shape == (3, 3)


def test_costspec_apply_requires_linear_term():
    spec = CostSpec(A=np.eye(2), B=np.eye(2))
    with pytest.raises(ShapeMismatch):
        spec.apply(np.ones((2, 1)))


def test_costspec_apply_factored_matches_dense():
    rng = np.random.default_rng(13)
    C1 = rng.uniform(size=(4, 3))
    C2 = rng.uniform(size=(5, 3))
    M = rng.standard_normal((5, 2))
    dense = CostSpec(C=C1 @ C2.T)
    factored = CostSpec(C1=C1, C2=C2)
    assert np.allclose(factored.apply(M), dense.apply(M), atol=1e-12)
    N = rng.standard_normal((4, 2))
    assert np.allclose(factored.apply_t(N), dense.apply_t(N), atol=1e-12)


def test_costspec_squared_intra_cached_and_correct():
    rng = np.random.default_rng(14)
    A = rng.uniform(size=(4, 4))
    A = (A + A.T) / 2
    spec = CostSpec(A=A, B=np.eye(3))
    assert np.allclose(spec.A_sq, A * A, atol=0)
    assert spec.A_sq is spec.A_sq
    assert not spec.A_sq.flags.writeable
    assert np.allclose(spec.B_sq, np.eye(3), atol=0)


# ---------------------------------------------------------------- ProblemSpec

def _spec_kwargs(**over):
    kw = dict(
        a=uniform_marginal(4),
        b=uniform_marginal(5),
        r1=2,
        r2=2,
        mode="balanced",
        objective="w",
    )
    kw.update(over)
    return kw


def test_problemspec_accepts_all_modes_and_objectives():
    for mode in ("balanced", "unbalanced", "sr-left", "sr-right"):
        ProblemSpec(**_spec_kwargs(mode=mode))
    for obj in ("w", "gw", "fgw"):
        ProblemSpec(**_spec_kwargs(objective=obj))


def test_problemspec_rejects_bad_mode():
    with pytest.raises(ValueError):
        ProblemSpec(**_spec_kwargs(mode="semi"))


def test_problemspec_rejects_rank_over_dimensions():
    from frlc.errors import InvalidRank

    with pytest.raises(InvalidRank):
        ProblemSpec(**_spec_kwargs(r1=9))


def test_problemspec_rejects_nonpositive_knobs():
    with pytest.raises(ValueError):
        ProblemSpec(**_spec_kwargs(gamma=0.0))
    with pytest.raises(ValueError):
        ProblemSpec(**_spec_kwargs(epsilon=0.0))


def test_problemspec_fgw_alpha_range():
    ProblemSpec(**_spec_kwargs(objective="fgw", alpha=0.5))
    with pytest.raises(ValueError):
        ProblemSpec(**_spec_kwargs(objective="fgw", alpha=1.0))


def test_uniform_marginal_sums_to_one():
    u = uniform_marginal(7)
    assert u.shape == (7,)
    assert u.sum() == pytest.approx(1.0, abs=1e-15)
