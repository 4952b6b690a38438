"""Interval MDP models, stationary policies and the nominal switched system."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import DEFAULT, Tolerances, seed_override
from .errors import (
    DiscountRange,
    IntervalOrder,
    NotSimplex,
    PolicyExplosion,
    ProjectionFailed,
    RowSumInfeasible,
    SingularSystem,
)


@dataclass(frozen=True, eq=False)
class MoimdpModel:
    """Multi-objective interval MDP.

    Arrays are padded to the largest action set: ``p_lower[x, u, x']`` and
    ``r_lower[m, x, u]`` are only meaningful for ``u < len(actions[x])``.
    """

    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    p_lower: np.ndarray
    p_upper: np.ndarray
    r_lower: np.ndarray
    r_upper: np.ndarray
    discounts: np.ndarray
    initial_state: int = 0

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def q(self) -> int:
        return len(self.discounts)

    @property
    def dim(self) -> int:
        return self.n * self.q

    def pairs(self):
        for x, acts in enumerate(self.actions):
            for u in range(len(acts)):
                yield x, u

    def equals(self, other: "MoimdpModel") -> bool:
        return (
            self.states == other.states
            and self.actions == other.actions
            and self.initial_state == other.initial_state
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("p_lower", "p_upper", "r_lower", "r_upper", "discounts")
            )
        )


def make_model(states, actions, p_lower, p_upper, r_lower, r_upper, discounts,
               initial_state=0) -> MoimdpModel:
    """Build a model from nested sequences, padding per-state action sets."""
    states = tuple(states)
    actions = tuple(tuple(a) for a in actions)
    return MoimdpModel(
        states=states,
        actions=actions,
        p_lower=np.asarray(p_lower, dtype=float),
        p_upper=np.asarray(p_upper, dtype=float),
        r_lower=np.asarray(r_lower, dtype=float),
        r_upper=np.asarray(r_upper, dtype=float),
        discounts=np.asarray(discounts, dtype=float).reshape(-1),
        initial_state=int(initial_state),
    )


def validate_model(model: MoimdpModel, tol: Tolerances = DEFAULT) -> MoimdpModel:
    n = model.n
    amax = max(len(a) for a in model.actions)
    if model.p_lower.shape != (n, amax, n) or model.p_upper.shape != (n, amax, n):
        raise IntervalOrder("p shape", model.p_lower.shape, "", (n, amax, n))
    q = model.q
    if model.r_lower.shape != (q, n, amax) or model.r_upper.shape != (q, n, amax):
        raise IntervalOrder("r shape", model.r_lower.shape, "", (q, n, amax))
    for m, g in enumerate(model.discounts):
        if not 0.0 < g < 1.0:
            raise DiscountRange(m, float(g))
    for x, u in model.pairs():
        lo, hi = model.p_lower[x, u], model.p_upper[x, u]
        if np.any(lo < 0) or np.any(hi > 1):
            bad = int(np.argmax((lo < 0) | (hi > 1)))
            raise IntervalOrder("P", (x, u, bad), lo[bad], hi[bad])
        bad = np.nonzero(lo > hi)[0]
        if bad.size:
            k = int(bad[0])
            raise IntervalOrder("P", (x, u, k), lo[k], hi[k])
        if lo.sum() > 1 + tol.row_sum or hi.sum() < 1 - tol.row_sum:
            raise RowSumInfeasible(model.states[x], model.actions[x][u], lo.sum(), hi.sum())
        for m in range(q):
            if model.r_lower[m, x, u] > model.r_upper[m, x, u]:
                raise IntervalOrder("R", (m, x, u), model.r_lower[m, x, u], model.r_upper[m, x, u])
    if not 0 <= model.initial_state < n:
        raise IntervalOrder("initial_state", (model.initial_state,), 0, n - 1)
    return model


@dataclass(frozen=True)
class PolicySet:
    """All stationary policies, lexicographic in per-state action indices."""

    policies: tuple[tuple[int, ...], ...]
    action_names: tuple[tuple[str, ...], ...] = ()

    def __len__(self) -> int:
        return len(self.policies)

    def __getitem__(self, i):
        return self.policies[i]

    def label(self, i: int) -> str:
        if not self.action_names:
            return str(self.policies[i])
        return ",".join(self.action_names[x][u] for x, u in enumerate(self.policies[i]))


def enumerate_policies(model: MoimdpModel, cap: int | None = None) -> PolicySet:
    cap = DEFAULT.policy_cap if cap is None else cap
    count = int(np.prod([len(a) for a in model.actions]))
    if count > cap:
        raise PolicyExplosion(count, cap)
    pols = tuple(itertools.product(*(range(len(a)) for a in model.actions)))
    return PolicySet(pols, model.actions)


def project_box_simplex(v, lower, upper) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{y : sum(y) = 1, lower <= y <= upper}``.

    The solution is ``clip(v - theta, lower, upper)``; ``theta`` is found
    exactly by scanning the sorted breakpoints of the piecewise-linear sum.
    """
    v = np.asarray(v, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.sum() > 1 + 1e-12 or upper.sum() < 1 - 1e-12 or np.any(lower > upper):
        raise ProjectionFailed(f"box {lower} .. {upper} does not meet the simplex")

    def total(theta):
        return np.clip(v - theta, lower, upper).sum()

    bps = np.unique(np.concatenate([v - upper, v - lower]))
    sums = np.array([total(t) for t in bps])
    # sums is nonincreasing in theta
    if sums[0] <= 1.0:
        theta = bps[0]
    elif sums[-1] >= 1.0:
        theta = bps[-1]
    else:
        k = int(np.nonzero(sums < 1.0)[0][0])
        t0, t1, s0, s1 = bps[k - 1], bps[k], sums[k - 1], sums[k]
        theta = t0 + (s0 - 1.0) * (t1 - t0) / (s0 - s1)
    y = np.clip(v - theta, lower, upper)
    # absorb rounding on a free coordinate
    free = np.nonzero((y > lower + 1e-15) & (y < upper - 1e-15))[0]
    if free.size:
        i = free[0]
        y[i] = np.clip(y[i] + (1.0 - y.sum()), lower[i], upper[i])
    return y


@dataclass(frozen=True, eq=False)
class NominalModel:
    """Per-policy nominal matrices.

    ``i_hat``/``delta``: (M, n, n); ``r_hat``: (M, q, n);
    ``a_hat``: (M, qn, qn); ``b_hat``: (M, qn). Interval bounds restricted to
    each policy are kept alongside (``p_lo``, ``p_hi``, ``r_lo``, ``r_hi``).
    """

    policies: PolicySet
    discounts: np.ndarray
    i_hat: np.ndarray
    delta: np.ndarray
    r_hat: np.ndarray
    a_hat: np.ndarray
    b_hat: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    r_lo: np.ndarray
    r_hi: np.ndarray

    @property
    def M(self) -> int:
        return len(self.policies)

    @property
    def n(self) -> int:
        return self.i_hat.shape[1]

    @property
    def q(self) -> int:
        return len(self.discounts)


def block_diag_discounted(gammas, P) -> np.ndarray:
    n = P.shape[-1]
    q = len(gammas)
    A = np.zeros((q * n, q * n))
    for m, g in enumerate(gammas):
        A[m * n:(m + 1) * n, m * n:(m + 1) * n] = g * P
    return A


def policy_rows(model: MoimdpModel, pol: Sequence[int]):
    """Interval transition rows and rewards of the chain induced by ``pol``."""
    idx = np.arange(model.n)
    u = np.asarray(pol)
    return (
        model.p_lower[idx, u],
        model.p_upper[idx, u],
        model.r_lower[:, idx, u],
        model.r_upper[:, idx, u],
    )


def build_nominal(model: MoimdpModel, policies: PolicySet | None = None) -> NominalModel:
    policies = enumerate_policies(model) if policies is None else policies
    n, q = model.n, model.q
    M = len(policies)
    i_hat = np.zeros((M, n, n))
    delta = np.zeros((M, n, n))
    r_hat = np.zeros((M, q, n))
    a_hat = np.zeros((M, q * n, q * n))
    b_hat = np.zeros((M, q * n))
    p_lo = np.zeros((M, n, n))
    p_hi = np.zeros((M, n, n))
    r_lo = np.zeros((M, q, n))
    r_hi = np.zeros((M, q, n))
    # rows depend only on (x, u): project each once
    cache: dict[tuple[int, int], np.ndarray] = {}
    for k, pol in enumerate(policies.policies):
        plo, phi, rlo, rhi = policy_rows(model, pol)
        for x, u in enumerate(pol):
            if (x, u) not in cache:
                cache[x, u] = project_box_simplex(0.5 * (plo[x] + phi[x]), plo[x], phi[x])
            i_hat[k, x] = cache[x, u]
        delta[k] = np.maximum(i_hat[k] - plo, phi - i_hat[k])
        r_hat[k] = 0.5 * (rlo + rhi)
        a_hat[k] = block_diag_discounted(model.discounts, i_hat[k])
        b_hat[k] = r_hat[k].reshape(-1)
        p_lo[k], p_hi[k], r_lo[k], r_hi[k] = plo, phi, rlo, rhi
    return NominalModel(policies, model.discounts.copy(), i_hat, delta, r_hat,
                        a_hat, b_hat, p_lo, p_hi, r_lo, r_hi)


def check_simplex(lam, M: int, tol: float = DEFAULT.simplex) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape != (M,):
        raise NotSimplex(f"NotSimplex: expected {M} weights, got {lam.shape[0]}")
    if np.any(lam < -tol) or abs(lam.sum() - 1.0) > tol:
        raise NotSimplex(f"NotSimplex: weights {lam} are not a probability vector")
    return lam


def mixture(lam, nominal: NominalModel):
    """Convex combination of the nominal blocks, ``(A_lambda, B_lambda)``."""
    lam = check_simplex(lam, nominal.M)
    A = np.tensordot(lam, nominal.a_hat, axes=1)
    B = lam @ nominal.b_hat
    return A, B


def steady_state(A, B, tol: float = DEFAULT.solve_residual) -> np.ndarray:
    """Solve ``(I - A) W = B``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    lhs = np.eye(A.shape[0]) - A
    try:
        W = np.linalg.solve(lhs, B)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    resid = np.linalg.norm(lhs @ W - B, np.inf)
    if not np.isfinite(resid) or resid > tol * (1.0 + np.linalg.norm(B, np.inf)):
        raise SingularSystem(f"steady-state residual {resid:.3e} too large")
    return W


@dataclass(frozen=True)
class FeasibleProjection:
    w: np.ndarray
    lam: np.ndarray
    distance: float
    probes: int = 0


def project_to_feasible(w_tar, nominal: NominalModel, budget: int | None = None,
                        seed: int = 0, extra_lambdas: Sequence = (),
                        tol: Tolerances = DEFAULT) -> FeasibleProjection:
    """Approximate nearest point of the feasible steady-state set.

    Probes every pure policy, the barycenter, any ``extra_lambdas`` and
    Dirichlet(1, ..., 1) samples until ``budget`` probes are spent.
    """
    w_tar = np.asarray(w_tar, dtype=float)
    M = nominal.M
    budget = max(M, 2048) if budget is None else int(budget)
    cands = [np.eye(M)[i] for i in range(M)]
    if budget > M:
        cands.append(np.full(M, 1.0 / M))
    cands.extend(check_simplex(l, M) for l in extra_lambdas)
    rng = np.random.default_rng(seed_override(seed))
    n_rand = max(0, budget - len(cands))
    if n_rand:
        cands.extend(rng.dirichlet(np.ones(M), size=n_rand))
    best = None
    for lam in cands:
        w = steady_state(*mixture(lam, nominal))
        dist = float(np.linalg.norm(w - w_tar))
        if best is None or dist < best[0]:
            best = (dist, w, lam)
    dist, w, lam = best
    if dist <= tol.feasible_hit:
        return FeasibleProjection(w_tar.copy(), np.asarray(lam), 0.0, len(cands))
    return FeasibleProjection(w, np.asarray(lam), dist, len(cands))

