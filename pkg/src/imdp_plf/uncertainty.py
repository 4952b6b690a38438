"""Polytopic over-approximation of the uncertain error dynamics.

For every policy the realizations ``(A, L)`` with ``A = diag(g_m P)`` and
``L = B - (I - A) W_tar`` are enclosed in the convex hull of finitely many
vertex pairs. Vertices are corners of the elementwise box
``[I_hat - Delta, I_hat + Delta] x [R_lo, R_hi]``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import DEFAULT, seed_override
from .errors import BadUserVertex, DimensionMismatch, EmptyVertexSet, VertexExplosion
from .model import MoimdpModel, NominalModel, block_diag_discounted


def offsets(A, B, w_tar) -> np.ndarray:
    """Affine term ``L = B - (I - A) W_tar`` of the error dynamics."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    w_tar = np.asarray(w_tar, dtype=float)
    d = A.shape[0]
    if A.shape != (d, d) or B.shape != (d,) or w_tar.shape != (d,):
        raise DimensionMismatch(
            f"DimensionMismatch: A {A.shape}, B {B.shape}, W_tar {w_tar.shape}"
        )
    L = B - w_tar + A @ w_tar
    # cancellation leaves round-off where the exact offset is zero
    scale = np.abs(B) + np.abs(w_tar) + np.abs(A) @ np.abs(w_tar)
    L[np.abs(L) <= 1e-12 * scale] = 0.0
    return L


@dataclass(frozen=True, eq=False)
class IntervalBox:
    """Elementwise uncertainty box per policy, for exact interval arithmetic.

    ``p_lo``/``p_hi``: (M, n, n); ``r_lo``/``r_hi``: (M, q, n).
    """

    p_lo: np.ndarray
    p_hi: np.ndarray
    r_lo: np.ndarray
    r_hi: np.ndarray
    gammas: np.ndarray
    w_tar: np.ndarray

    @property
    def M(self) -> int:
        return self.p_lo.shape[0]

    def realize(self, pi: int, P, R):
        """``(A, L)`` for the realization ``(P, R)`` of policy ``pi``."""
        A = block_diag_discounted(self.gammas, np.asarray(P, dtype=float))
        return A, offsets(A, np.asarray(R, dtype=float).reshape(-1), self.w_tar)

    def corner(self, pi: int, p_bits, r_bits):
        P = np.where(p_bits, self.p_hi[pi], self.p_lo[pi])
        R = np.where(r_bits, self.r_hi[pi], self.r_lo[pi])
        return self.realize(pi, P, R)

    def worst_corner(self, pi: int, c, E):
        """Corner maximizing ``c @ (A E + L)`` over the box."""
        n = self.p_lo.shape[1]
        q = len(self.gammas)
        cm = np.asarray(c, dtype=float).reshape(q, n)
        Y = (np.asarray(E, dtype=float) + self.w_tar).reshape(q, n)
        G = np.einsum("m,mx,my->xy", self.gammas, cm, Y)
        return self.corner(pi, G > 0, cm > 0)


@dataclass(frozen=True, eq=False)
class VertexSet:
    """Finite vertex family ``{(A_k, L_k)}`` per policy.

    Vertices of all policies are stacked in ``A`` (K, d, d) and ``L`` (K, d);
    policy ``pi`` owns rows ``offsets[pi]:offsets[pi + 1]``.
    """

    A: np.ndarray
    L: np.ndarray
    offsets: np.ndarray
    tags: tuple[str, ...]
    mode: str = "corners"
    box: IntervalBox | None = None
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.offsets) - 1

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def d_count(self, pi: int) -> int:
        return int(self.offsets[pi + 1] - self.offsets[pi])

    def policy(self, pi: int):
        s, e = self.offsets[pi], self.offsets[pi + 1]
        return self.A[s:e], self.L[s:e]

    def pairs(self, pi: int):
        A, L = self.policy(pi)
        return list(zip(A, L))

    @property
    def sound(self) -> bool:
        """True when the vertex hull covers the full uncertainty box."""
        return self.mode in ("corners", "user")

    def with_extra(self, extra: dict[int, list], tag: str = "refined") -> "VertexSet":
        """Copy with additional vertices ``{pi: [(A, L), ...]}`` appended."""
        As, Ls, tags, offs = [], [], [], [0]
        for pi in range(self.M):
            s, e = self.offsets[pi], self.offsets[pi + 1]
            As.extend(self.A[s:e])
            Ls.extend(self.L[s:e])
            tags.extend(self.tags[s:e])
            for A, L in extra.get(pi, []):
                As.append(np.asarray(A, float))
                Ls.append(np.asarray(L, float))
                tags.append(tag)
            offs.append(len(As))
        return VertexSet(np.array(As), np.array(Ls), np.array(offs), tuple(tags),
                         self.mode, self.box, dict(self.meta))

    def to_json(self) -> dict:
        out = {}
        for pi in range(self.M):
            s, e = self.offsets[pi], self.offsets[pi + 1]
            out[str(pi)] = [
                {"A": self.A[k].tolist(), "L": self.L[k].tolist(), "tags": self.tags[k]}
                for k in range(s, e)
            ]
        return {"mode": self.mode, "policies": out}

    @classmethod
    def from_json(cls, data: dict) -> "VertexSet":
        per = data["policies"]
        pairs = [[(v["A"], v["L"]) for v in per[str(pi)]] for pi in range(len(per))]
        tags = [[v.get("tags", "") for v in per[str(pi)]] for pi in range(len(per))]
        return user_vertex_set(pairs, tags=tags)


def _stack(per_policy: Sequence[Sequence], tags, mode, box, meta=None) -> VertexSet:
    As, Ls, offs, flat_tags = [], [], [0], []
    for pi, verts in enumerate(per_policy):
        for k, (A, L) in enumerate(verts):
            As.append(A)
            Ls.append(L)
            flat_tags.append(tags[pi][k])
        offs.append(len(As))
    return VertexSet(np.array(As, dtype=float), np.array(Ls, dtype=float),
                     np.array(offs), tuple(flat_tags), mode, box, meta or {})


def interval_box(nominal: NominalModel, w_tar) -> IntervalBox:
    return IntervalBox(
        p_lo=nominal.i_hat - nominal.delta,
        p_hi=nominal.i_hat + nominal.delta,
        r_lo=nominal.r_lo.copy(),
        r_hi=nominal.r_hi.copy(),
        gammas=np.asarray(nominal.discounts, dtype=float),
        w_tar=np.asarray(w_tar, dtype=float),
    )


def uncertain_entries(box: IntervalBox, pi: int):
    """Indices of box entries with positive width: (transition idx, reward idx)."""
    p_idx = list(zip(*np.nonzero(box.p_hi[pi] > box.p_lo[pi])))
    r_idx = list(zip(*np.nonzero(box.r_hi[pi] > box.r_lo[pi])))
    return p_idx, r_idx


def _corner_from_bits(box: IntervalBox, pi, p_idx, r_idx, bits):
    P = box.p_lo[pi].copy()
    R = box.r_lo[pi].copy()
    for b, (x, y) in zip(bits[:len(p_idx)], p_idx):
        if b:
            P[x, y] = box.p_hi[pi][x, y]
    for b, (m, x) in zip(bits[len(p_idx):], r_idx):
        if b:
            R[m, x] = box.r_hi[pi][m, x]
    tag = "".join("u" if b else "l" for b in bits)
    return box.realize(pi, P, R), tag


def corner_count(box: IntervalBox, pi: int) -> int:
    p_idx, r_idx = uncertain_entries(box, pi)
    return 2 ** (len(p_idx) + len(r_idx))


def build_vertex_set(model: MoimdpModel, nominal: NominalModel, w_tar,
                     mode: str = "corners", budget: int = 8,
                     user: Sequence | None = None, cap: int | None = None,
                     seed: int = 0) -> VertexSet:
    """Vertex family for every policy.

    ``corners`` enumerates all extreme combinations (at most ``cap`` per
    policy); ``budgeted`` keeps the all-lower and all-upper corners plus
    ``budget - 2`` seeded random corners; ``user`` validates ``user``.
    """
    w_tar = np.asarray(w_tar, dtype=float)
    if w_tar.shape != (model.dim,):
        raise DimensionMismatch(f"DimensionMismatch: W_tar has shape {w_tar.shape}, expected ({model.dim},)")
    box = interval_box(nominal, w_tar)
    if mode == "user":
        if user is None:
            raise BadUserVertex("BadUserVertex: user mode needs a vertex list")
        return user_vertex_set(user)
    cap = DEFAULT.corner_cap if cap is None else cap
    rng = np.random.default_rng(seed_override(seed))
    per_policy, tags = [], []
    for pi in range(nominal.M):
        p_idx, r_idx = uncertain_entries(box, pi)
        k = len(p_idx) + len(r_idx)
        if mode == "corners":
            if 2 ** k > cap:
                raise VertexExplosion(2 ** k, cap)
            bit_rows = list(itertools.product((0, 1), repeat=k))
        elif mode == "budgeted":
            bit_rows = [(0,) * k, (1,) * k]
            seen = set(bit_rows)
            target = min(max(budget, 2), 2 ** k)
            attempts = 0
            while len(bit_rows) < target and attempts < 100 * target:
                row = tuple(int(b) for b in rng.integers(0, 2, size=k))
                attempts += 1
                if row not in seen:
                    seen.add(row)
                    bit_rows.append(row)
            bit_rows = list(dict.fromkeys(bit_rows))
        else:
            raise ValueError(f"unknown vertex mode {mode!r}")
        verts, vt = [], []
        for bits in bit_rows:
            pair, tag = _corner_from_bits(box, pi, p_idx, r_idx, bits)
            verts.append(pair)
            vt.append(tag)
        per_policy.append(verts)
        tags.append(vt)
    return _stack(per_policy, tags, mode, box, {"budget": budget} if mode == "budgeted" else {})


def user_vertex_set(per_policy: Sequence, tags=None) -> VertexSet:
    if not per_policy:
        raise EmptyVertexSet("EmptyVertexSet: no policies")
    dim = None
    clean = []
    for pi, verts in enumerate(per_policy):
        if not verts:
            raise EmptyVertexSet(f"EmptyVertexSet: policy {pi} has no vertices")
        row = []
        for A, L in verts:
            A = np.asarray(A, dtype=float)
            L = np.asarray(L, dtype=float).reshape(-1)
            dim = A.shape[0] if dim is None else dim
            if A.shape != (dim, dim) or L.shape != (dim,):
                raise BadUserVertex(f"BadUserVertex: policy {pi} vertex shapes {A.shape}, {L.shape}")
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(L))):
                raise BadUserVertex(f"BadUserVertex: policy {pi} has non-finite entries")
            row.append((A, L))
        clean.append(row)
    if tags is None:
        tags = [[f"user{k}" for k in range(len(v))] for v in clean]
    return _stack(clean, tags, "user", None)


@dataclass(frozen=True)
class ErrorBox:
    """Verification domain ``[-e_max, e_max]``."""

    e_max: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.e_max, dtype=float)
        if np.any(e <= 0):
            raise ValueError("ErrorBox radii must be positive")
        object.__setattr__(self, "e_max", e)

    @property
    def dim(self) -> int:
        return len(self.e_max)

    def contains(self, E, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(E)) <= self.e_max + tol))

    def corners(self) -> np.ndarray:
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))
        return signs * self.e_max


def default_error_box(model: MoimdpModel, nominal: NominalModel, w_tar,
                      floor: float = 1.0) -> ErrorBox:
    w = np.asarray(w_tar, dtype=float).reshape(model.q, model.n)
    radii = []
    for m in range(model.q):
        r_max = max(np.abs(nominal.r_lo[:, m]).max(), np.abs(nominal.r_hi[:, m]).max())
        e = 2.0 * (r_max / (1.0 - model.discounts[m]) + np.abs(w[m]).max())
        radii.append(np.full(model.n, max(e, floor)))
    return ErrorBox(np.concatenate(radii))
