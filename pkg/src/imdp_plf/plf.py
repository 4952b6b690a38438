"""Polyhedral Lyapunov functions, the min-max switching law and a grid oracle.

``V(E) = max_i (c_i @ E - d_i)`` and the candidate invariant set of attraction
is ``{E : V(E) <= rho}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import qmc

from .config import DEFAULT, seed_override
from .errors import DimensionMismatch, EmptyVertexSet
from .kernels import affine_max, box_worst
from .uncertainty import ErrorBox, VertexSet


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(float(x))


@dataclass(frozen=True, eq=False)
class Plf:
    """Facets ``C`` (k, dim), offsets ``d`` (k,), level ``rho``.

    ``exact`` optionally holds the rational values the solver produced as
    ``(rows of Fractions, offsets, rho)``; the float arrays are their
    nearest doubles.
    """

    C: np.ndarray
    d: np.ndarray
    rho: float
    mode: str = "smt"
    exact: tuple | None = None

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if C.shape[0] == 0 or C.shape[0] != d.shape[0]:
            raise ValueError("Plf needs at least one facet and one offset per facet")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "rho", float(self.rho))

    @classmethod
    def from_exact(cls, rows, offs, rho, mode="smt") -> "Plf":
        rows = [[_frac(v) for v in r] for r in rows]
        offs = [_frac(v) for v in offs]
        rho = _frac(rho)
        return cls(np.array([[float(v) for v in r] for r in rows]),
                   np.array([float(v) for v in offs]), float(rho), mode,
                   (rows, offs, rho))

    @property
    def k(self) -> int:
        return self.C.shape[0]

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    def exact_values(self):
        """Facets, offsets and level as Fractions."""
        if self.exact is not None:
            return self.exact
        return ([[Fraction(float(v)) for v in r] for r in self.C],
                [Fraction(float(v)) for v in self.d], Fraction(self.rho))

    def scaled(self, alpha: float) -> "Plf":
        return Plf(alpha * self.C, alpha * self.d, alpha * self.rho, self.mode)

    def to_json(self) -> dict:
        out = {
            "facets": [{"c": [float(v) for v in c], "d": float(dv)} for c, dv in zip(self.C, self.d)],
            "rho": self.rho,
            "mode": self.mode,
        }
        if self.exact is not None:
            rows, offs, rho = self.exact
            out["exact"] = {
                "facets": [{"c": [str(v) for v in r], "d": str(dv)} for r, dv in zip(rows, offs)],
                "rho": str(rho),
            }
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Plf":
        mode = data.get("mode", "smt")
        if "exact" in data:
            ex = data["exact"]
            return cls.from_exact([f["c"] for f in ex["facets"]],
                                  [f["d"] for f in ex["facets"]], ex["rho"], mode)
        return cls(np.array([f["c"] for f in data["facets"]], dtype=float),
                   np.array([f["d"] for f in data["facets"]], dtype=float),
                   data["rho"], mode)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "Plf":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def evaluate(plf: Plf, E) -> float | np.ndarray:
    """``V(E)``; accepts a single point or a stack of points (N, dim)."""
    E = np.asarray(E, dtype=float)
    if E.shape[-1] != plf.dim:
        raise DimensionMismatch(f"DimensionMismatch: E has {E.shape[-1]} entries, plf expects {plf.dim}")
    vals = E @ plf.C.T - plf.d
    out = vals.max(axis=-1)
    return float(out) if out.ndim == 0 else out


def successor_table(plf: Plf, vs: VertexSet):
    """Affine rows ``(C A_k, C L_k - d)`` per (vertex, facet), grouped by policy."""
    if vs.A.shape[0] == 0:
        raise EmptyVertexSet("EmptyVertexSet: no vertices")
    if vs.dim != plf.dim:
        raise DimensionMismatch(f"DimensionMismatch: vertices have dim {vs.dim}, plf {plf.dim}")
    G = np.einsum("jd,kde->kje", plf.C, vs.A).reshape(-1, plf.dim)
    h = (np.einsum("jd,kd->kj", plf.C, vs.L) - plf.d).reshape(-1)
    seg = np.asarray(vs.offsets, dtype=np.int64) * plf.k
    return G, h, seg


def policy_values(plf: Plf, vs: VertexSet, E) -> np.ndarray:
    """Worst-vertex successor value ``max_k V(A_k E + L_k)`` for every policy."""
    E = np.asarray(E, dtype=float)
    for pi in range(vs.M):
        if vs.d_count(pi) == 0:
            raise EmptyVertexSet(f"EmptyVertexSet: policy {pi} has no vertices")
    G, h, seg = successor_table(plf, vs)
    return affine_max(G, h, seg, E.reshape(1, -1))[0]


def switching_law(plf: Plf, vs: VertexSet, E):
    """``argmin_pi max_k V(A_k E + L_k)``; ties go to the smallest index."""
    vals = policy_values(plf, vs, E)
    pi = int(np.argmin(vals))
    return pi, float(vals[pi])


def vertex_values(plf: Plf, vs: VertexSet, E, pi: int) -> np.ndarray:
    A, L = vs.policy(pi)
    if A.shape[0] == 0:
        raise EmptyVertexSet(f"EmptyVertexSet: policy {pi} has no vertices")
    succ = A @ np.asarray(E, dtype=float) + L
    return evaluate(plf, succ)


@dataclass
class Violation:
    E: np.ndarray
    condition: str
    policy: int
    vertex: int
    margin: float


@dataclass
class IsoaReport:
    violations: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return sum(self.counts.values()) == 0

    def to_json(self) -> dict:
        return {
            "pass": self.passed,
            "counts": dict(self.counts),
            "grid": dict(self.grid),
            "violations": [
                {"E": v.E.tolist(), "condition": v.condition, "policy": v.policy,
                 "vertex": v.vertex, "margin": v.margin}
                for v in self.violations
            ],
        }


def grid_points(box: ErrorBox, resolution: int = 201, samples: int = 131_072,
                seed: int = 0) -> tuple[np.ndarray, dict]:
    """Full tensor grid when ``dim <= 4``, otherwise scrambled Sobol samples."""
    if resolution < 3:
        raise ValueError("resolution must be at least 3")
    dim = box.dim
    if dim <= 4:
        half = (resolution - 1) / 2.0
        ticks = (np.arange(resolution) - half) / half  # exact 0 at the center for odd counts
        axes = [e * ticks for e in box.e_max]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        return pts, {"kind": "grid", "resolution": resolution, "points": len(pts)}
    eng = qmc.Sobol(dim, scramble=True, seed=seed_override(seed))
    u = eng.random(samples)
    pts = (2.0 * u - 1.0) * box.e_max
    pts = np.vstack([np.zeros(dim), pts])
    return pts, {"kind": "sobol", "samples": samples, "points": len(pts)}


def worst_values(plf: Plf, vs: VertexSet, points, interval: bool = False) -> np.ndarray:
    """(N, M) worst successor values, over vertices or over the interval box."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if interval:
        b = vs.box
        if b is None:
            raise ValueError("interval evaluation needs a vertex set built from a model")
        return box_worst(plf.C, plf.d, b.gammas, 0.5 * (b.p_lo + b.p_hi),
                         0.5 * (b.p_hi - b.p_lo), 0.5 * (b.r_lo + b.r_hi),
                         0.5 * (b.r_hi - b.r_lo), b.w_tar, points)
    G, h, seg = successor_table(plf, vs)
    return affine_max(G, h, seg, points)


def check_isoa_grid(plf: Plf, vs: VertexSet, box: ErrorBox, resolution: int = 201,
                    interval: bool | None = None, margin: float = DEFAULT.grid_strict,
                    inv_tol: float = DEFAULT.grid_invariance, samples: int = 131_072,
                    max_report: int = 200, seed: int = 0, points=None) -> IsoaReport:
    """Check the invariant-set-of-attraction conditions pointwise.

    C1: ``V(0) <= rho``. C2: outside the level set some policy decreases
    ``V`` by more than ``margin`` at every vertex. C3: inside, some policy
    keeps every successor at most ``rho + inv_tol``. NONNEG: ``V >= 0``.
    Points with ``V <= rho + inv_tol`` count as inside, so rounding on the
    level-set boundary is not mistaken for a missing decrease.
    ``interval=None`` uses the full interval box whenever the vertex set
    does not cover it by itself.
    """
    if interval is None:
        interval = not vs.sound
    if points is None:
        pts, spec = grid_points(box, resolution, samples, seed)
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        spec = {"kind": "points", "points": len(pts)}
    spec["interval"] = bool(interval)
    V = evaluate(plf, pts)
    W = worst_values(plf, vs, pts, interval)
    best = W.min(axis=1)
    pol = W.argmin(axis=1)
    rho = plf.rho
    outside = V > rho + inv_tol
    c2 = outside & ~(best < V - margin)
    c3 = ~outside & ~(best <= rho + inv_tol)
    nonneg = V < -inv_tol
    v0 = float(np.max(-plf.d))
    counts = {"C1": int(v0 > rho + inv_tol), "C2": int(c2.sum()),
              "C3": int(c3.sum()), "NONNEG": int(nonneg.sum())}
    report = IsoaReport(counts=counts, grid=spec)
    if counts["C1"]:
        report.violations.append(Violation(np.zeros(plf.dim), "C1", -1, -1, v0 - rho))
    for name, mask, ref in (("C2", c2, V - margin), ("C3", c3, np.full_like(V, rho + inv_tol)),
                            ("NONNEG", nonneg, np.zeros_like(V))):
        for i in np.nonzero(mask)[0][:max_report]:
            p = int(pol[i])
            kappa = -1
            if not interval:
                kappa = int(np.argmax(vertex_values(plf, vs, pts[i], p)))
            m = float(best[i] - ref[i]) if name != "NONNEG" else float(-V[i])
            report.violations.append(Violation(pts[i].copy(), name, p, kappa, m))
    return report
