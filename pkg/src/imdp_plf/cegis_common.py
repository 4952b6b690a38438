"""Configuration, results and helpers shared by both CEGIS engines."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .config import DEFAULT, seed_override
from .uncertainty import ErrorBox

SUCCESS = "success"
FAIL = "fail"
CAP = "cap-exhausted"


@dataclass
class CegisConfig:
    max_iter: int = 50
    timeout: float = 120.0          # seconds per solver call
    c_max: float = 10.0             # |c_t| <= c_max for synthesized facets
    c_min: float = 1.0              # ||c||_inf >= c_min rules out the zero facet
    d_max: float = 10.0             # offsets in [-rho, d_max * rho] (fixed-level engine)
    tighten: bool = True            # minimize new offsets (fixed-level engine)
    refit: str = "on_infeasible"    # never | on_infeasible | always
    first_facets: int = 2
    initial_facets: str = "none"    # none | box
    corner_sample: int = 16         # box corners in the initial set when dim > 4
    max_cex_per_iter: int = 3
    eps: float = DEFAULT.milp_eps
    synth_eps: float | None = None  # strictness of the MILP synthesizer (None: eps)
    rho_max: float | None = None
    rho_floor: float | str | None = None  # lower bound on the level; "box": norm bound
    bounded: bool = False           # also require the level set to miss the box boundary
    inflate: tuple = (2.0, 4.0, 8.0)  # level factors tried when synthesis stalls (MILP engine)
    stall_tol: float = 1e-3         # a new facet this close to an old one counts as a stall
    oracle_resolution: int | None = None
    oracle_samples: int = 131_072
    seed: int = 0
    dump_dir: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class CegisResult:
    status: str
    plf: object = None
    iterations: int = 0
    counterexamples: list = field(default_factory=list)
    log: list = field(default_factory=list)
    replay_total: int = 0
    replay_ok: int = 0
    elapsed: float = 0.0
    report: object = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS

    def state_json(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "counterexamples": [np.asarray(e, dtype=float).tolist() for e in self.counterexamples],
            "facets": None if self.plf is None else self.plf.to_json(),
            "replay": {"total": self.replay_total, "ok": self.replay_ok},
            "elapsed_s": self.elapsed,
            "message": self.message,
            "log": self.log,
        }


def initial_counterexamples(box: ErrorBox, e0=None, cfg: CegisConfig | None = None) -> list:
    """``{0, E_0, box corners}``; corners are subsampled above four dimensions."""
    cfg = cfg or CegisConfig()
    pts = [np.zeros(box.dim)]
    if e0 is not None:
        e0 = np.clip(np.asarray(e0, dtype=float), -box.e_max, box.e_max)
        pts.append(e0)
    if box.dim <= 4:
        pts.extend(box.corners())
    else:
        rng = np.random.default_rng(seed_override(cfg.seed))
        signs = rng.choice([-1.0, 1.0], size=(cfg.corner_sample, box.dim))
        pts.extend(signs * box.e_max)
    out = []
    for p in pts:
        if not any(np.array_equal(p, o) for o in out):
            out.append(p)
    return out


def box_facets(dim: int, scale: float = 1.0) -> np.ndarray:
    """``+-e_t`` facets (the infinity norm)."""
    eye = np.eye(dim) * scale
    return np.vstack([eye, -eye])


def box_level(vs) -> float | None:
    """Level making the unit ``+-e_t`` facets a certificate on their own.

    With ``a = max_k ||A_k||_inf < 1`` and ``l = max_k ||L_k||_inf`` every
    vertex maps the ball of radius ``r`` into radius ``a r + l``, so any
    ``r >= l / (1 - a)`` is invariant and larger balls strictly shrink.
    Returns ``None`` when the vertices do not contract in that norm.
    """
    a = float(np.abs(vs.A).sum(axis=2).max())
    if a >= 1.0:
        return None
    return float(np.abs(vs.L).max()) / (1.0 - a)


def too_close(E, known, tol: float = 1e-9) -> bool:
    E = np.asarray(E, dtype=float)
    return any(np.max(np.abs(E - np.asarray(k, dtype=float))) < tol for k in known)
