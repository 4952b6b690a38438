"""End-to-end pipeline: target projection, certificate synthesis and the
Lyapunov-guided robust value iteration.
"""
from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linprog

from .cegis_common import CAP, FAIL, SUCCESS, CegisConfig, CegisResult
from .cegis_milp import run_cegis_milp
from .cegis_smt import run_cegis_smt
from .errors import DimensionMismatch, EmptyVertexSet, Infeasible, SolverTimeout
from .io import dump_json, write_trace
from .model import (MoimdpModel, build_nominal, enumerate_policies, mixture,
                    project_to_feasible, steady_state)
from .plf import Plf, check_isoa_grid, evaluate, switching_law
from .uncertainty import ErrorBox, VertexSet, build_vertex_set, default_error_box

INSIDE_TOL = 1e-9
BOUNDS = {"min": "lower", "max": "upper"}


@dataclass
class RunConfig:
    engine: str = "smt"             # smt | milp
    opt: str = "both"               # min | max | both
    max_iter: int = 500
    tol: float = 1e-8
    lam: list | None = None
    seed: int = 0
    vertex_mode: str = "corners"    # corners | budgeted
    budget: int = 8
    refine_rounds: int = 6          # box-oracle refinement rounds for budgeted vertices
    refine_points: int = 8          # violating points turned into vertices per round
    confirm: int = 10               # steps inside the level set after convergence
    oracle_resolution: int | None = None
    box: list | None = None         # error-box radii (default from the rewards)
    cegis: CegisConfig = field(default_factory=CegisConfig)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.engine not in ("smt", "milp"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.opt not in ("min", "max", "both"):
            raise ValueError(f"unknown opt {self.opt!r}")
        if isinstance(self.cegis, dict):
            self.cegis = CegisConfig(**self.cegis)

    @property
    def opts(self):
        return ("min", "max") if self.opt == "both" else (self.opt,)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class GSet:
    """``{W : V(W - offset) <= level}``."""

    plf: Plf
    offset: np.ndarray
    level: float

    def value(self, W) -> float:
        return evaluate(self.plf, np.asarray(W, float) - self.offset)

    def contains(self, W, tol: float = INSIDE_TOL) -> bool:
        return bool(self.value(W) <= self.level + tol)

    def diameter(self) -> float:
        """Infinity-norm diameter (``inf`` when the set is unbounded)."""
        C, d = self.plf.C, self.plf.d
        b = self.level + d + C @ self.offset
        out = 0.0
        for t in range(self.plf.dim):
            span = []
            for sgn in (1.0, -1.0):
                cost = np.zeros(self.plf.dim)
                cost[t] = -sgn
                r = linprog(cost, A_ub=C, b_ub=b, bounds=[(None, None)] * self.plf.dim,
                            method="highs")
                if r.status == 3:
                    return math.inf
                if r.status != 0:
                    return math.nan
                span.append(-r.fun)
            out = max(out, span[0] + span[1])
        return out

    def to_json(self) -> dict:
        return {"facets": self.plf.to_json()["facets"], "offset": self.offset.tolist(),
                "rho": self.level, "rho_plf": self.plf.rho, "diameter_inf": self.diameter()}


def build_g(plf: Plf, w_tar, w_prime) -> GSet:
    """Smallest shifted level set holding ``Omega + w_prime`` and ``w_tar``."""
    w_prime = np.asarray(w_prime, dtype=float)
    level = max(plf.rho, evaluate(plf, np.asarray(w_tar, float) - w_prime))
    return GSet(plf, w_prime.copy(), float(level))


def robust_step(E, pi: int, vs: VertexSet, opt: str, plf: Plf):
    """Successor under the vertex extremizing ``V`` of the successor."""
    A, L = vs.policy(pi)
    if A.shape[0] == 0:
        raise EmptyVertexSet(f"EmptyVertexSet: policy {pi} has no vertices")
    succ = np.einsum("kde,e->kd", A, np.asarray(E, dtype=float)) + L
    vals = evaluate(plf, succ)
    kappa = int(np.argmax(vals) if opt == "max" else np.argmin(vals))
    return succ[kappa], kappa


@dataclass
class Trace:
    opt: str
    W: np.ndarray
    E: np.ndarray
    pi: np.ndarray
    V: np.ndarray
    kappa: np.ndarray
    entered: bool
    converged: bool
    checks: dict = field(default_factory=dict)

    @property
    def bound(self) -> str:
        return BOUNDS[self.opt]


def run_trace(plf: Plf, vs: VertexSet, e0, w_prime, opt: str, cfg: RunConfig) -> Trace:
    E = np.asarray(e0, dtype=float).copy()
    Es, pis, Vs, kappas = [E.copy()], [], [evaluate(plf, E)], []
    level = plf.rho + INSIDE_TOL
    entered = converged = False
    settled = None
    for k in range(cfg.max_iter):
        pi, _ = switching_law(plf, vs, E)
        E_next, kappa = robust_step(E, pi, vs, opt, plf)
        pis.append(pi)
        kappas.append(kappa)
        step = float(np.max(np.abs(E_next - E)))
        E = E_next
        Es.append(E.copy())
        Vs.append(evaluate(plf, E))
        inside = Vs[-1] <= level
        entered |= inside
        if settled is None and step < cfg.tol and inside:
            settled = k
        if settled is not None and k - settled >= cfg.confirm:
            converged = True
            break
    pis.append(switching_law(plf, vs, E)[0])
    kappas.append(-1)
    Es = np.array(Es)
    Vs = np.array(Vs)
    tr = Trace(opt, Es + w_prime, Es, np.array(pis), Vs, np.array(kappas), entered, converged)
    tr.checks = trace_checks(Vs, plf.rho)
    return tr


def trace_checks(V, rho: float) -> dict:
    """Invariance and decrease realized along a trace."""
    V = np.asarray(V, dtype=float)
    inside = V[:-1] <= rho + INSIDE_TOL
    inv_bad = inside & (V[1:] > rho + INSIDE_TOL)
    dec_bad = ~inside & ~(V[1:] < V[:-1])
    first = np.nonzero(V <= rho + INSIDE_TOL)[0]
    stays = True
    if first.size:
        stays = bool(np.all(V[first[0]:] <= rho + INSIDE_TOL))
    return {"invariance_violations": int(inv_bad.sum()), "decrease_violations": int(dec_bad.sum()),
            "first_inside": int(first[0]) if first.size else None, "stays_inside": stays}


@dataclass
class SynthesisRun:
    model_states: int
    objectives: int
    w_tar: np.ndarray
    w_prime: np.ndarray
    lam: np.ndarray
    distance: float
    plf: Plf
    g: GSet
    traces: dict
    cegis: CegisResult | None
    t_synth: float
    t_vi: float
    config: RunConfig
    vertex_count: int = 0
    refinements: int = 0
    oracle: dict | None = None
    label: str = "W1"

    @property
    def did_not_enter(self) -> list:
        return [b for b, tr in self.traces.items() if not tr.entered]

    def error_norm(self, bound: str) -> float | None:
        tr = self.traces.get(bound)
        return None if tr is None else float(np.max(np.abs(tr.E[-1])))

    def policy(self) -> dict:
        out = {}
        for b, tr in self.traces.items():
            tail = tr.pi[-self.config.confirm:]
            out[b] = {"final": int(tr.pi[-1]) + 1, "stationary_tail": bool(np.all(tail == tail[-1]))}
        return out

    def report(self) -> dict:
        return {
            "target": self.label,
            "n": self.model_states,
            "q": self.objectives,
            "engine": self.config.engine,
            "status": SUCCESS if self.cegis is None else self.cegis.status,
            "policy": self.policy(),
            "E_lower": self.error_norm("lower"),
            "E_upper": self.error_norm("upper"),
            "T_synth": self.t_synth,
            "T_vi": self.t_vi,
            "rho": self.plf.rho,
            "facets": self.plf.k,
            "cegis_iterations": None if self.cegis is None else self.cegis.iterations,
            "replay": None if self.cegis is None else
            {"total": self.cegis.replay_total, "ok": self.cegis.replay_ok},
            "vertices": self.vertex_count,
            "refinements": self.refinements,
            "oracle": self.oracle,
            "w_tar": self.w_tar.tolist(),
            "w_tar_prime": self.w_prime.tolist(),
            "lambda": self.lam.tolist(),
            "projection_distance": self.distance,
            "g_rho": self.g.level,
            "did_not_enter_isoa": self.did_not_enter,
            "traces": {b: {"length": len(tr.V), "converged": tr.converged, "entered": tr.entered,
                           "terminal_in_g": self.g.contains(tr.W[-1]), **tr.checks}
                       for b, tr in self.traces.items()},
        }

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        for b, tr in self.traces.items():
            write_trace(os.path.join(out_dir, f"trace_{b}.csv"), tr.W, tr.pi, tr.V)
        self.plf.save(os.path.join(out_dir, "plf.json"))
        dump_json(self.g.to_json(), os.path.join(out_dir, "g_set.json"))
        dump_json(self.report(), os.path.join(out_dir, "report.json"))
        if self.cegis is not None:
            dump_json(self.cegis.state_json(), os.path.join(out_dir, "cegis_state.json"))


def _synthesize(vs: VertexSet, box: ErrorBox, e0, cfg: RunConfig, cex0=None) -> CegisResult:
    runner = run_cegis_smt if cfg.engine == "smt" else run_cegis_milp
    return runner(vs, box, cfg.cegis, e0=e0, cex0=cex0)


def refine_vertices(plf: Plf, vs: VertexSet, box: ErrorBox, cfg: RunConfig):
    """Box-oracle check; violating points add their worst corners as vertices."""
    rep = check_isoa_grid(plf, vs, box, _resolution(box, cfg), interval=True,
                          samples=cfg.cegis.oracle_samples, seed=cfg.seed)
    if rep.passed:
        return rep, None, []
    pts = [v.E for v in rep.violations if v.condition in ("C2", "C3")][:cfg.refine_points]
    extra = {}
    for E in pts:
        for pi in range(vs.M):
            for c in plf.C:
                extra.setdefault(pi, []).append(vs.box.worst_corner(pi, c, E))
    return rep, vs.with_extra(extra), pts


def _resolution(box: ErrorBox, cfg: RunConfig) -> int:
    if cfg.oracle_resolution:
        return cfg.oracle_resolution
    return 201 if box.dim <= 2 else (59 if box.dim == 3 else 21)


def _raise_for(res: CegisResult):
    if res.status == FAIL:
        err = Infeasible(f"Infeasible: {res.message}")
    else:
        err = SolverTimeout(f"SolverTimeout: {res.message}")
    err.result = res
    raise err


def prepare(model: MoimdpModel, w_tar=None, cfg: RunConfig | None = None):
    """Policies, nominal blocks, projected target, vertices and the error box."""
    cfg = cfg or RunConfig()
    nominal = build_nominal(model, enumerate_policies(model))
    if cfg.lam is not None:
        lam = np.asarray(cfg.lam, dtype=float)
        w_prime = steady_state(*mixture(lam, nominal))
        w_tar = w_prime.copy() if w_tar is None else np.asarray(w_tar, dtype=float)
        distance = float(np.linalg.norm(w_tar - w_prime))
    else:
        if w_tar is None:
            raise ValueError("either a target or a mixture lambda is required")
        w_tar = np.asarray(w_tar, dtype=float)
        proj = project_to_feasible(w_tar, nominal, seed=cfg.seed)
        w_prime, lam, distance = proj.w, proj.lam, proj.distance
    vs = build_vertex_set(model, nominal, w_prime, cfg.vertex_mode, cfg.budget, seed=cfg.seed)
    if cfg.box is not None:
        radii = np.broadcast_to(np.asarray(cfg.box, dtype=float), (model.dim,))
        box = ErrorBox(radii.copy())
    else:
        box = default_error_box(model, nominal, w_prime)
    return nominal, np.asarray(w_tar, float), w_prime, np.asarray(lam, float), distance, vs, box


def synthesize_certificate(vs: VertexSet, box: ErrorBox, e0, cfg: RunConfig):
    """Run the chosen engine; budgeted vertex sets are refined until the box oracle passes.

    Returns ``(CegisResult, vertex set used, refinement rounds, oracle report dict)``.
    """
    res = _synthesize(vs, box, e0, cfg)
    refinements, oracle = 0, None
    if not res.ok:
        return res, vs, refinements, oracle
    while not vs.sound:
        rep, refined, pts = refine_vertices(res.plf, vs, box, cfg)
        oracle = _short(rep)
        if refined is None:
            break
        if refinements >= cfg.refine_rounds:
            res.status, res.message = CAP, "box oracle still fails after vertex refinement"
            return res, vs, refinements, oracle
        refinements += 1
        vs = refined
        cex = [np.zeros(box.dim)] + [np.asarray(e, float) for e in res.counterexamples] + pts
        prev = res
        res = _synthesize(vs, box, e0, cfg, cex0=_dedupe(cex))
        res.iterations += prev.iterations
        res.replay_total += prev.replay_total
        res.replay_ok += prev.replay_ok
        if not res.ok:
            return res, vs, refinements, oracle
    if oracle is None:
        rep = res.report or check_isoa_grid(res.plf, vs, box, _resolution(box, cfg),
                                            samples=cfg.cegis.oracle_samples, seed=cfg.seed)
        oracle = _short(rep)
    return res, vs, refinements, oracle


def _short(rep) -> dict:
    out = rep.to_json()
    out["violations"] = out["violations"][:5]
    return out


def run_pipeline(model: MoimdpModel, w_tar=None, cfg: RunConfig | None = None, w0=None,
                 plf: Plf | None = None) -> SynthesisRun:
    """Synthesize (unless ``plf`` is given), build the target set and run the VI.

    Raises :class:`Infeasible` or :class:`SolverTimeout` when synthesis does
    not succeed; the engine result is attached as ``err.result``.
    """
    cfg = cfg or RunConfig()
    _, w_tar, w_prime, lam, distance, vs, box = prepare(model, w_tar, cfg)
    w0 = np.zeros(model.dim) if w0 is None else np.asarray(w0, dtype=float)
    e0 = w0 - w_prime
    t0 = time.perf_counter()
    res, refinements, oracle = None, 0, None
    if plf is None:
        res, vs, refinements, oracle = synthesize_certificate(vs, box, e0, cfg)
        if not res.ok:
            _raise_for(res)
        plf = res.plf
    elif plf.dim != model.dim:
        raise DimensionMismatch(f"DimensionMismatch: plf has dim {plf.dim}, model {model.dim}")
    t_synth = time.perf_counter() - t0
    g = build_g(plf, w_tar, w_prime)
    t1 = time.perf_counter()
    traces = {}
    for opt in cfg.opts:
        tr = run_trace(plf, vs, e0, w_prime, opt, cfg)
        traces[tr.bound] = tr
    t_vi = time.perf_counter() - t1
    return SynthesisRun(model.n, model.q, w_tar, w_prime, lam, distance, plf, g, traces, res,
                        t_synth, t_vi, cfg, vs.A.shape[0], refinements, oracle)


def _dedupe(points):
    out = []
    for p in points:
        if not any(np.max(np.abs(p - o)) < 1e-9 for o in out):
            out.append(p)
    return out


def load_run_report(path) -> dict:
    with open(os.path.join(path, "report.json") if os.path.isdir(path) else path) as fh:
        return json.load(fh)
