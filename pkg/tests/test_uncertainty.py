import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_model
from imdp_plf.casestudies import load_bundle
from imdp_plf.errors import BadUserVertex, DimensionMismatch, EmptyVertexSet, VertexExplosion
from imdp_plf.model import build_nominal, make_model, mixture, project_box_simplex, steady_state
from imdp_plf.uncertainty import (ErrorBox, VertexSet, build_vertex_set, corner_count,
                                  default_error_box, interval_box, offsets, user_vertex_set)


def test_offsets(robot):
    nom = build_nominal(robot.model)
    A, B = nom.a_hat[2], nom.b_hat[2]
    W = steady_state(A, B)
    assert np.abs(offsets(A, B, W)).max() < 1e-12
    np.testing.assert_array_equal(offsets(A, B, np.zeros(2)), B)
    with pytest.raises(DimensionMismatch):
        offsets(A, B, np.zeros(3))


def test_mdp_single_vertex(robot):
    nom = build_nominal(robot.model)
    vs = build_vertex_set(robot.model, nom, np.zeros(2))
    assert vs.M == 6 and all(vs.d_count(p) == 1 for p in range(6))
    np.testing.assert_array_equal(vs.A[2], nom.a_hat[2])


def test_imdp3_corner_count(imdp3):
    nom = build_nominal(imdp3.model)
    vs = build_vertex_set(imdp3.model, nom, np.zeros(3))
    # two uncertain transitions out of s plus the reward of s
    assert vs.d_count(0) == 8 and vs.d_count(1) == 8
    assert len(set(vs.tags[:8])) == 8


def test_ev_corner_count_from_sparsity():
    b = load_bundle("ev-battery", q=1)
    nom = build_nominal(b.model)
    bx = interval_box(nom, np.zeros(b.model.dim))
    for pi in (0, 5, 15):
        nnz = np.count_nonzero(nom.i_hat[pi]) + np.count_nonzero(nom.r_hat[pi])
        assert corner_count(bx, pi) == 2 ** nnz
        # up to 3% variation on every nonzero transition
        nz = nom.i_hat[pi] > 0
        np.testing.assert_allclose(nom.delta[pi][nz], 0.03 * nom.i_hat[pi][nz], rtol=1e-9)


def test_vertex_explosion(imdp3):
    nom = build_nominal(imdp3.model)
    with pytest.raises(VertexExplosion):
        build_vertex_set(imdp3.model, nom, np.zeros(3), cap=4)


def test_budgeted(imdp3, monkeypatch):
    m = imdp3.model
    nom = build_nominal(m)
    vs = build_vertex_set(m, nom, np.zeros(3), "budgeted", budget=4, seed=1)
    assert vs.mode == "budgeted" and not vs.sound
    assert all(vs.d_count(p) == 4 for p in range(vs.M))
    assert vs.tags[0] == "lll" and vs.tags[1] == "uuu"
    again = build_vertex_set(m, nom, np.zeros(3), "budgeted", budget=4, seed=1)
    np.testing.assert_array_equal(vs.A, again.A)
    monkeypatch.setenv("IMDP_PLF_SEED", "1")
    env = build_vertex_set(m, nom, np.zeros(3), "budgeted", budget=4, seed=99)
    assert env.tags == vs.tags


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_corner_hull_covers_realizations(seed):
    """Every realization's linear functional is dominated by a corner (and by worst_corner)."""
    rng = np.random.default_rng(seed)
    model = random_model(rng, n=int(rng.integers(1, 3)), q=1, amax=2)
    nom = build_nominal(model)
    w = rng.normal(size=model.dim)
    vs = build_vertex_set(model, nom, w)
    bx = vs.box
    for pi in range(vs.M):
        P = np.array([project_box_simplex(rng.uniform(bx.p_lo[pi][x], bx.p_hi[pi][x]),
                                          np.clip(bx.p_lo[pi][x], 0, 1),
                                          np.clip(bx.p_hi[pi][x], 0, 1))
                      for x in range(model.n)])
        R = rng.uniform(bx.r_lo[pi], bx.r_hi[pi])
        A, L = bx.realize(pi, P, R)
        c = rng.normal(size=model.dim)
        E = rng.normal(size=model.dim)
        val = c @ (A @ E + L)
        Av, Lv = vs.policy(pi)
        best = max(c @ (Ak @ E + Lk) for Ak, Lk in zip(Av, Lv))
        assert val <= best + 1e-9
        Aw, Lw = bx.worst_corner(pi, c, E)
        assert abs(c @ (Aw @ E + Lw) - best) < 1e-9


def test_user_vertices_and_json():
    pairs = [[(np.eye(2) * 0.5, np.zeros(2))], [(np.eye(2) * 0.25, np.ones(2))]]
    vs = user_vertex_set(pairs)
    assert vs.sound and vs.M == 2
    back = VertexSet.from_json(vs.to_json())
    np.testing.assert_array_equal(back.A, vs.A)
    np.testing.assert_array_equal(back.L, vs.L)
    with pytest.raises(BadUserVertex):
        user_vertex_set([[(np.eye(2), np.zeros(3))]])
    with pytest.raises(BadUserVertex):
        user_vertex_set([[(np.eye(2) * np.nan, np.zeros(2))]])
    with pytest.raises(EmptyVertexSet):
        user_vertex_set([[]])
    extra = vs.with_extra({1: [(np.eye(2), np.zeros(2))]})
    assert extra.d_count(0) == 1 and extra.d_count(1) == 2


def test_default_box(robot):
    nom = build_nominal(robot.model)
    w = steady_state(*mixture(np.eye(6)[2], nom))
    box = default_error_box(robot.model, nom, w)
    # 2 * (8 / (1 - 0.5) + 13.2308)
    np.testing.assert_allclose(box.e_max, 2 * (16 + 172 / 13))
    zero = make_model(["s"], [["a"]], np.ones((1, 1, 1)), np.ones((1, 1, 1)),
                      np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), [0.5])
    zb = default_error_box(zero, build_nominal(zero), np.zeros(1))
    assert zb.e_max.tolist() == [1.0]
    with pytest.raises(ValueError):
        ErrorBox(np.array([1.0, 0.0]))
    corners = ErrorBox(np.array([1.0, 2.0])).corners()
    assert {tuple(c) for c in corners} == set(itertools.product((-1.0, 1.0), (-2.0, 2.0)))
