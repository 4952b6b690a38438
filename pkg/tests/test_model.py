from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import one_state_model, random_model
from imdp_plf.errors import (DiscountRange, IntervalOrder, NotSimplex, PolicyExplosion,
                             ProjectionFailed, RowSumInfeasible, SingularSystem)
from imdp_plf.model import (build_nominal, enumerate_policies, make_model, mixture,
                            project_box_simplex, project_to_feasible, steady_state,
                            validate_model)

ALPHA, BETA = Fraction(7, 10), Fraction(2, 5)


def robot_matrices():
    """P(1)..P(6) with the high/wait row kept in place (see P(4), P(6))."""
    a, b = ALPHA, BETA
    low = {"search": [b, 1 - b], "wait": [1, 0], "recharge": [0, 1]}
    high = {"search": [1 - a, a], "wait": [0, 1]}
    out = []
    for ul in ("search", "wait", "recharge"):
        for uh in ("search", "wait"):
            out.append(np.array([low[ul], high[uh]], dtype=object))
    return out


def test_robot_matrices_exact(robot):
    m = robot.model
    nom = build_nominal(m)
    assert m.n == 2 and len(nom.policies) == 6
    for k, P in enumerate(robot_matrices()):
        assert np.array_equal(nom.i_hat[k], P.astype(float)), k
    # rewards: search from low pays beta*8 - 3(1 - beta)
    assert m.r_lower[0, 0, 0] == float(BETA * 8 - 3 * (1 - BETA))
    assert list(m.discounts) == [0.5]


def test_imdp3_intervals_exact(imdp3):
    m = imdp3.model
    assert m.n == 3 and len(enumerate_policies(m)) == 2 and m.discounts[0] == 0.7
    lo, hi = m.p_lower[0], m.p_upper[0]
    assert lo[0, 1] == float(Fraction(1, 3)) and hi[0, 1] == float(Fraction(2, 3))
    assert lo[1, 1] == float(Fraction(2, 5)) and hi[1, 1] == float(Fraction(3, 5))
    assert lo[0, 2] == float(Fraction(1, 10)) and hi[0, 2] == 1.0


def test_mdp_special_case_valid():
    P = np.array([[[0.25, 0.75]], [[1.0, 0.0]]])
    m = make_model(["a", "b"], [["x"], ["x"]], P, P, np.zeros((1, 2, 1)), np.ones((1, 2, 1)), [0.9])
    assert validate_model(m) is m


def test_row_sum_infeasible():
    P = np.array([[[0.9]]])
    m = make_model(["s"], [["a"]], P, P, np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), [0.5])
    with pytest.raises(RowSumInfeasible):
        validate_model(m)


def test_interval_order_and_discount():
    lo = np.array([[[0.6]]])
    hi = np.array([[[0.4]]])
    m = make_model(["s"], [["a"]], lo, hi, np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), [0.5])
    with pytest.raises(IntervalOrder):
        validate_model(m)
    m = one_state_model()
    bad = make_model(m.states, m.actions, m.p_lower, m.p_upper, m.r_lower, m.r_upper, [1.0])
    with pytest.raises(DiscountRange):
        validate_model(bad)
    bad = make_model(m.states, m.actions, m.p_lower, m.p_upper, m.r_upper, m.r_lower, [0.5])
    with pytest.raises(IntervalOrder):
        validate_model(bad)


def test_policies_lexicographic(robot):
    ps = enumerate_policies(robot.model)
    assert ps.policies == ((0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1))
    assert ps.label(2) == "wait,search"
    assert len(enumerate_policies(one_state_model(r_lo=(0.0,), r_hi=(1.0,)))) == 1
    with pytest.raises(PolicyExplosion):
        enumerate_policies(robot.model, cap=5)


def box_simplex_oracle(v, lo, hi):
    """Bisection on the threshold of ``clip(v - theta, lo, hi)``."""
    a, b = float(np.min(v - hi)) - 1.0, float(np.max(v - lo)) + 1.0
    for _ in range(200):
        t = 0.5 * (a + b)
        if np.clip(v - t, lo, hi).sum() > 1.0:
            a = t
        else:
            b = t
    return np.clip(v - 0.5 * (a + b), lo, hi)


def test_projection_imdp3_row(imdp3):
    m = imdp3.model
    lo, hi = m.p_lower[0, 0], m.p_upper[0, 0]
    y = project_box_simplex(0.5 * (lo + hi), lo, hi)
    np.testing.assert_allclose(y, [0.0, 0.475, 0.525], atol=1e-12)
    np.testing.assert_allclose(y, box_simplex_oracle(0.5 * (lo + hi), lo, hi), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_projection_matches_bisection(n, seed):
    rng = np.random.default_rng(seed)
    c = rng.dirichlet(np.ones(n))
    lo = np.clip(c - rng.random(n) * 0.3, 0, 1)
    hi = np.clip(c + rng.random(n) * 0.3, 0, 1)
    v = rng.normal(size=n)
    y = project_box_simplex(v, lo, hi)
    assert abs(y.sum() - 1) < 1e-12
    assert np.all(y >= lo - 1e-15) and np.all(y <= hi + 1e-15)
    np.testing.assert_allclose(y, box_simplex_oracle(v, lo, hi), atol=1e-9)
    np.testing.assert_allclose(project_box_simplex(y, lo, hi), y, atol=1e-12)


def test_projection_empty():
    with pytest.raises(ProjectionFailed):
        project_box_simplex([0.5, 0.5], [0.6, 0.6], [1.0, 1.0])


def test_nominal_robot_policy3(robot):
    nom = build_nominal(robot.model)
    np.testing.assert_array_equal(nom.a_hat[2], 0.5 * np.array([[1, 0], [0.3, 0.7]]))
    np.testing.assert_array_equal(nom.b_hat[2], [2.0, 8.0])


def test_mixture(imdp3, robot):
    nom = build_nominal(imdp3.model)
    A, B = mixture([0.9, 0.1], nom)
    np.testing.assert_allclose(A, 0.9 * nom.a_hat[0] + 0.1 * nom.a_hat[1])
    np.testing.assert_allclose(B, 0.9 * nom.b_hat[0] + 0.1 * nom.b_hat[1])
    nr = build_nominal(robot.model)
    A, B = mixture(np.eye(6)[2], nr)
    np.testing.assert_array_equal(A, nr.a_hat[2])
    with pytest.raises(NotSimplex):
        mixture([0.5, 0.6], nom)
    with pytest.raises(NotSimplex):
        mixture([1.0], nom)


def test_mixture_identical_policies():
    m = one_state_model(r_lo=(1.0, 1.0), r_hi=(1.0, 1.0))
    nom = build_nominal(m)
    A, B = mixture([0.5, 0.5], nom)
    np.testing.assert_allclose(A, nom.a_hat[0])
    np.testing.assert_allclose(B, nom.b_hat[0])


def test_steady_state_robot_oracle(robot):
    # exact 2x2 solve: W_low = 2 / (1 - 1/2), W_high = (8 + 1/2 * 3/10 * W_low) / (1 - 7/20)
    w_low = Fraction(2) / (1 - Fraction(1, 2))
    w_high = (8 + Fraction(1, 2) * Fraction(3, 10) * w_low) / (1 - Fraction(7, 20))
    assert (float(w_low), float(w_high)) == (4.0, float(Fraction(172, 13)))
    nom = build_nominal(robot.model)
    W = steady_state(nom.a_hat[2], nom.b_hat[2])
    np.testing.assert_allclose(W, [4.0, 172 / 13], atol=1e-12)


def test_steady_state_trivial():
    assert np.all(steady_state(0.5 * np.eye(2), np.zeros(2)) == 0)
    np.testing.assert_allclose(steady_state([[0.5]], [1.0]), [2.0])
    with pytest.raises(SingularSystem):
        steady_state(np.eye(2), np.ones(2))


def test_project_to_feasible(robot):
    nom = build_nominal(robot.model)
    w3 = steady_state(nom.a_hat[2], nom.b_hat[2])
    proj = project_to_feasible(w3, nom)
    assert proj.distance == 0.0
    np.testing.assert_array_equal(proj.w, w3)
    # vertex-only search returns the nearest pure steady state
    far = w3 + np.array([0.3, -0.2])
    proj = project_to_feasible(far, nom, budget=nom.M)
    pure = [steady_state(nom.a_hat[k], nom.b_hat[k]) for k in range(nom.M)]
    best = min(range(nom.M), key=lambda k: np.linalg.norm(pure[k] - far))
    np.testing.assert_allclose(proj.w, pure[best])
    assert proj.lam[best] == 1.0


def test_project_imdp3_mixture(imdp3):
    nom = build_nominal(imdp3.model)
    lam = [0.9, 0.1]
    w = steady_state(*mixture(lam, nom))
    proj = project_to_feasible(w, nom, extra_lambdas=[lam])
    assert proj.distance == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_nominal_vi_contracts(seed):
    """Nominal value iteration error shrinks by max discount in the infinity norm."""
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    nom = build_nominal(model)
    g = float(model.discounts.max())
    for k in range(nom.M):
        A, B = nom.a_hat[k], nom.b_hat[k]
        assert np.abs(A).sum(axis=1).max() <= g + 1e-12
        W_ss = steady_state(A, B)
        W = rng.normal(size=model.dim) * 10
        for _ in range(20):
            e0 = np.abs(W - W_ss).max()
            W = A @ W + B
            e1 = np.abs(W - W_ss).max()
            if e0 > 1e-9:
                assert e1 <= (g + 1e-6) * e0
