"""Small models and generators shared by the tests."""
import numpy as np

from imdp_plf.model import make_model, validate_model


def random_model(rng, n=None, q=None, amax=3, width=0.1):
    """Random valid interval MDP with ``n <= 4`` states and ``q <= 2`` objectives."""
    n = int(rng.integers(1, 5)) if n is None else n
    q = int(rng.integers(1, 3)) if q is None else q
    acts = [[f"a{u}" for u in range(int(rng.integers(1, amax + 1)))] for _ in range(n)]
    na = max(len(a) for a in acts)
    P = np.zeros((n, na, n))
    lo = np.zeros_like(P)
    hi = np.zeros_like(P)
    for x in range(n):
        for u in range(len(acts[x])):
            row = rng.dirichlet(np.ones(n))
            P[x, u] = row
            lo[x, u] = np.clip(row - width * rng.random(n), 0, 1)
            hi[x, u] = np.clip(row + width * rng.random(n), 0, 1)
    R = rng.uniform(-2, 2, size=(q, n, na))
    half = 0.1 * rng.random((q, n, na))
    for x in range(n):
        R[:, x, len(acts[x]):] = half[:, x, len(acts[x]):] = 0.0  # padded action slots
    gammas = rng.uniform(0.3, 0.95, size=q)
    model = make_model([f"s{i}" for i in range(n)], acts, lo, hi, R - half, R + half, gammas)
    return validate_model(model)


def one_state_model(r_lo=(0.5, 0.25), r_hi=(1.0, 0.75), gamma=0.5):
    """One state, two actions, exact self loop: the dynamics are scalar."""
    n_act = len(r_lo)
    P = np.ones((1, n_act, 1))
    R_lo = np.array(r_lo, dtype=float).reshape(1, 1, n_act)
    R_hi = np.array(r_hi, dtype=float).reshape(1, 1, n_act)
    model = make_model(["s"], [[f"a{u}" for u in range(n_act)]], P, P, R_lo, R_hi, [gamma])
    return validate_model(model)


def scalar_vertex_set(pairs_per_policy):
    """Vertex set from scalar ``(a, l)`` pairs per policy."""
    from imdp_plf.uncertainty import user_vertex_set

    return user_vertex_set([[(np.array([[a]]), np.array([l])) for a, l in verts]
                            for verts in pairs_per_policy])
