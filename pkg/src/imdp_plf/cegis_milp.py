"""Counterexample-guided synthesis with zero offsets and a minimized level.

The synthesizer is a MILP that chooses a new facet and the smallest level
``rho`` such that every stored point satisfies the certificate; three MILP
searches look for points breaking nonnegativity (phase 1), decrease outside
the level set (phase 2) and invariance inside it (phase 3).
"""
from __future__ import annotations

import json
import logging
import os
import time

import numpy as np

from .cegis_common import (CAP, FAIL, SUCCESS, CegisConfig, CegisResult, box_facets,
                           box_level, initial_counterexamples, too_close)
from .conditions import phase_violated
from .milp import MilpProblem, MilpResult
from .plf import Plf, check_isoa_grid
from .uncertainty import ErrorBox, VertexSet

log = logging.getLogger(__name__)


def _unique_vertices(vs: VertexSet, pi: int):
    A, L = vs.policy(pi)
    seen, out = set(), []
    for Ak, Lk in zip(A, L):
        key = (Ak.tobytes(), Lk.tobytes())
        if key not in seen:
            seen.add(key)
            out.append((Ak, Lk))
    return out


def _box_vars(prob: MilpProblem, box: ErrorBox, point=None):
    """Box variables; ``point`` pins them to a single state instead."""
    if point is not None:
        return [prob.var(f"E{t}", float(v), float(v)) for t, v in enumerate(point)]
    return [prob.var(f"E{t}", -e, e) for t, e in enumerate(box.e_max)]


def _lin(c, E_idx):
    return {E_idx[t]: float(c[t]) for t in range(len(E_idx)) if c[t] != 0}


def _value_bound(plf: Plf, box: ErrorBox) -> float:
    return float(np.max(np.abs(plf.C) @ box.e_max + np.abs(plf.d))) + 1.0


def _maximize_sum(prob, E_idx):
    prob.maximize({i: 1.0 for i in E_idx})


def _finish(prob: MilpProblem, E_idx, cfg: CegisConfig, tag: str):
    if cfg.dump_dir:
        os.makedirs(cfg.dump_dir, exist_ok=True)
        with open(os.path.join(cfg.dump_dir, f"{tag}.lp"), "w") as fh:
            fh.write(prob.to_lp())
    res = prob.solve(cfg.timeout)
    E = None if not res.ok else np.array([res.x[i] for i in E_idx])
    return res, E


def verify_phase1(plf: Plf, box: ErrorBox, cfg: CegisConfig | None = None, tag="phase1",
                  point=None):
    """Point of the box where every facet is at most ``-eps``."""
    cfg = cfg or CegisConfig()
    prob = MilpProblem(tag)
    E = _box_vars(prob, box, point)
    for c, d in zip(plf.C, plf.d):
        prob.le(_lin(c, E), d - cfg.eps)
    _maximize_sum(prob, E)
    return _finish(prob, E, cfg, tag)


def _outside(prob, plf, E, rho, eps, name):
    """Binaries forcing ``V(E) >= rho + eps``."""
    zs = []
    for i, (c, d) in enumerate(zip(plf.C, plf.d)):
        z = prob.binary(f"{name}_z{i}")
        prob.ge_if(_lin(c, E), rho + eps + d, [(z, 1)])
        zs.append(z)
    prob.at_least(zs)


def verify_phase2(plf: Plf, vs: VertexSet, box: ErrorBox, cfg: CegisConfig | None = None,
                  tag="phase2", point=None):
    """Point outside the level set where no policy decreases ``V``."""
    cfg = cfg or CegisConfig()
    prob = MilpProblem(tag)
    E = _box_vars(prob, box, point)
    B = _value_bound(plf, box)
    T = prob.var("T", -B, B)
    for c, d in zip(plf.C, plf.d):
        co = _lin(-c, E)
        co[T] = 1.0
        prob.ge(co, -d)                      # T >= c @ E - d
    _outside(prob, plf, E, plf.rho, cfg.eps, "out")
    for pi in range(vs.M):
        ys = []
        for k, (Ak, Lk) in enumerate(_unique_vertices(vs, pi)):
            for j, (c, d) in enumerate(zip(plf.C, plf.d)):
                y = prob.binary(f"y{pi}_{k}_{j}")
                co = _lin(c @ Ak, E)
                co[T] = co.get(T, 0.0) - 1.0
                prob.ge_if(co, d - float(c @ Lk), [(y, 1)])   # successor value >= T
                ys.append(y)
        prob.at_least(ys)
    _maximize_sum(prob, E)
    return _finish(prob, E, cfg, tag)


def verify_phase3(plf: Plf, vs: VertexSet, box: ErrorBox, cfg: CegisConfig | None = None,
                  tag="phase3", point=None):
    """Point inside the level set whose every policy has an escaping successor."""
    cfg = cfg or CegisConfig()
    prob = MilpProblem(tag)
    E = _box_vars(prob, box, point)
    for c, d in zip(plf.C, plf.d):
        prob.le(_lin(c, E), plf.rho + d)
    for pi in range(vs.M):
        ys = []
        for k, (Ak, Lk) in enumerate(_unique_vertices(vs, pi)):
            for j, (c, d) in enumerate(zip(plf.C, plf.d)):
                y = prob.binary(f"y{pi}_{k}_{j}")
                prob.ge_if(_lin(c @ Ak, E), plf.rho + cfg.eps + d - float(c @ Lk), [(y, 1)])
                ys.append(y)
        prob.at_least(ys)
    _maximize_sum(prob, E)
    return _finish(prob, E, cfg, tag)


def verify_bounded(plf: Plf, box: ErrorBox, cfg: CegisConfig | None = None, tag="bounded"):
    """Point on the boundary of the error box that lies in the level set."""
    cfg = cfg or CegisConfig()
    prob = MilpProblem(tag)
    E = _box_vars(prob, box)
    for c, d in zip(plf.C, plf.d):
        prob.le(_lin(c, E), plf.rho + d)
    sel = []
    for t, e in enumerate(box.e_max):
        up, dn = prob.binary(f"f{t}p"), prob.binary(f"f{t}m")
        prob.ge_if({E[t]: 1.0}, e, [(up, 1)])
        prob.le_if({E[t]: 1.0}, -e, [(dn, 1)])
        sel += [up, dn]
    prob.at_least(sel)
    _maximize_sum(prob, E)
    return _finish(prob, E, cfg, tag)


def synthesize_milp(cex, vs: VertexSet, fixed, n_new: int, box: ErrorBox,
                    cfg: CegisConfig | None = None, tag="synth", far=()):
    """Minimize ``rho`` over ``n_new`` new facets given the fixed ones.

    Points in ``far`` must lie outside the level set.

    Returns ``(MilpResult, new facet rows or None, rho or None)``.
    """
    cfg = cfg or CegisConfig()
    fixed = np.zeros((0, box.dim)) if fixed is None or len(fixed) == 0 else np.asarray(fixed, float)
    dim = box.dim
    cmax = max(cfg.c_max, float(np.abs(fixed).max()) if fixed.size else 0.0)
    rho_max = cfg.rho_max if cfg.rho_max is not None else cmax * float(box.e_max.sum())
    eps = cfg.synth_eps if cfg.synth_eps is not None else cfg.eps
    floor = _floor(vs, cfg)
    rho_max = max(rho_max, floor)
    prob = MilpProblem(tag)
    rho = prob.var("rho", floor, rho_max)
    new = [[prob.var(f"c{i}_{t}", -cfg.c_max, cfg.c_max) for t in range(dim)] for i in range(n_new)]
    # each coefficient is 0 or has magnitude in [c_min, c_max], and at least
    # one is nonzero: rules out the zero facet and vanishing coefficients
    for i, c in enumerate(new):
        sel = []
        for t in range(dim):
            up, dn = prob.binary(f"n{i}_{t}p"), prob.binary(f"n{i}_{t}m")
            prob.le({c[t]: 1.0, up: -cfg.c_max, dn: cfg.c_min}, 0.0)
            prob.ge({c[t]: 1.0, up: -cfg.c_min, dn: cfg.c_max}, 0.0)
            prob.le({up: 1.0, dn: 1.0}, 1.0)
            sel += [up, dn]
        prob.at_least(sel)
    vcap = cmax * float(box.e_max.sum())
    for e_i, Ept in enumerate(cex):
        Ept = np.asarray(Ept, dtype=float)
        fixed_v = fixed @ Ept if fixed.size else np.zeros(0)
        new_v = [{c[t]: float(Ept[t]) for t in range(dim) if Ept[t] != 0} for c in new]
        # nonnegativity
        if not (fixed_v.size and fixed_v.max() >= 0):
            opts = []
            for i, co in enumerate(new_v):
                b = prob.binary(f"e{e_i}_nn{i}")
                prob.ge_if(co, 0.0, [(b, 1)])
                opts.append(b)
            if not opts:
                prob.constr({}, 1.0, 1.0)   # infeasible
            else:
                prob.at_least(opts)
        beta = prob.binary(f"e{e_i}_out")
        # outside branch: some facet >= rho + eps
        outs = []
        for i, fv in enumerate(fixed_v):
            o = prob.binary(f"e{e_i}_of{i}")
            prob.le_if({rho: 1.0}, float(fv) - eps, [(o, 1)])
            outs.append(o)
        for i, co in enumerate(new_v):
            o = prob.binary(f"e{e_i}_on{i}")
            row = dict(co)
            row[rho] = row.get(rho, 0.0) - 1.0
            prob.ge_if(row, eps, [(o, 1)])
            outs.append(o)
        prob.at_least(outs, 0.0, minus=[beta])
        # inside branch: every facet <= rho
        for fv in fixed_v:
            prob.ge_if({rho: 1.0}, float(fv), [(beta, 0)])
        for co in new_v:
            row = dict(co)
            row[rho] = row.get(rho, 0.0) - 1.0
            prob.le_if(row, 0.0, [(beta, 0)])
        # T <= V(E)
        T = prob.var(f"e{e_i}_T", -vcap, vcap)
        ts = []
        for i, fv in enumerate(fixed_v):
            t = prob.binary(f"e{e_i}_tf{i}")
            prob.le_if({T: 1.0}, float(fv), [(t, 1)])
            ts.append(t)
        for i, co in enumerate(new_v):
            t = prob.binary(f"e{e_i}_tn{i}")
            row = {k: -v for k, v in co.items()}
            row[T] = 1.0
            prob.le_if(row, 0.0, [(t, 1)])
            ts.append(t)
        prob.at_least(ts)
        sigmas = []
        for pi in range(vs.M):
            sg = prob.binary(f"e{e_i}_pi{pi}")
            sigmas.append(sg)
            succ = [Ak @ Ept + Lk for Ak, Lk in _unique_vertices(vs, pi)]
            if fixed.size:
                worst = max(float((fixed @ s).max()) for s in succ)
                prob.le_if({T: -1.0}, -worst - eps, [(beta, 1), (sg, 1)])
                prob.ge_if({rho: 1.0}, worst, [(beta, 0), (sg, 1)])
            for s in succ:
                for c in new:
                    co = {c[t]: float(s[t]) for t in range(dim) if s[t] != 0}
                    row = dict(co)
                    row[T] = row.get(T, 0.0) - 1.0
                    prob.le_if(row, -eps, [(beta, 1), (sg, 1)])
                    row = dict(co)
                    row[rho] = row.get(rho, 0.0) - 1.0
                    prob.le_if(row, 0.0, [(beta, 0), (sg, 1)])
        prob.at_least(sigmas)
    for e_i, Ept in enumerate(far):
        Ept = np.asarray(Ept, dtype=float)
        outs = []
        for i, fv in enumerate(fixed @ Ept if fixed.size else []):
            o = prob.binary(f"f{e_i}_of{i}")
            prob.le_if({rho: 1.0}, float(fv) - eps, [(o, 1)])
            outs.append(o)
        for i, c in enumerate(new):
            o = prob.binary(f"f{e_i}_on{i}")
            row = {c[t]: float(Ept[t]) for t in range(dim) if Ept[t] != 0}
            row[rho] = -1.0
            prob.ge_if(row, eps, [(o, 1)])
            outs.append(o)
        prob.at_least(outs)
    prob.minimize({rho: 1.0})
    if cfg.dump_dir:
        os.makedirs(cfg.dump_dir, exist_ok=True)
        with open(os.path.join(cfg.dump_dir, f"{tag}.lp"), "w") as fh:
            fh.write(prob.to_lp())
    res = prob.solve(cfg.timeout)
    if not res.ok:
        return res, None, None
    rows = np.array([[res.x[v] for v in c] for c in new]).reshape(n_new, dim)
    return res, rows, float(res.x[rho])


def _floor(vs: VertexSet, cfg: CegisConfig) -> float:
    if cfg.rho_floor is None:
        return 0.0
    if cfg.rho_floor == "box":
        lvl = box_level(vs)
        return 0.0 if lvl is None else lvl
    return float(cfg.rho_floor)


def plf_inside(plf: Plf, E, tol: float = 1e-9) -> bool:
    return float(np.max(plf.C @ np.asarray(E, float) - plf.d)) <= plf.rho + tol


def _stalled(rows, old, tol: float) -> bool:
    """True when every new facet nearly repeats an old one."""
    if rows is None or len(rows) == 0 or len(old) == 0:
        return False
    return all(np.min(np.max(np.abs(old - r), axis=1)) <= tol * max(1.0, np.abs(r).max())
               for r in rows)


def _verify_all(plf: Plf, vs: VertexSet, box: ErrorBox, cfg: CegisConfig, tag: str, res):
    """All three phases; replays what they find. True when none finds a point."""
    clean = True
    for phase, fn in ((1, verify_phase1), (2, verify_phase2), (3, verify_phase3)):
        args = (plf, box) if phase == 1 else (plf, vs, box)
        vres, E = fn(*args, cfg, f"{tag}_phase{phase}")
        if vres.ok:
            res.replay_total += 1
            res.replay_ok += int(phase_violated(plf, vs, E, phase, cfg.eps))
        if vres.status != "infeasible":
            clean = False
            break
    return clean


def _status_of(res: MilpResult) -> str:
    return FAIL if res.status == "infeasible" else CAP


def run_cegis_milp(vs: VertexSet, box: ErrorBox, cfg: CegisConfig | None = None,
                   e0=None, cex0=None) -> CegisResult:
    cfg = cfg or CegisConfig()
    t_start = time.perf_counter()
    cex = [np.asarray(p, dtype=float) for p in
           (cex0 if cex0 is not None else initial_counterexamples(box, e0, cfg))]
    facets = box_facets(box.dim) if cfg.initial_facets == "box" else np.zeros((0, box.dim))
    far = []
    rho = 0.0
    res = CegisResult(status=CAP)
    for s in range(cfg.max_iter):
        entry = {"s": s}
        n_new = cfg.first_facets if len(facets) == 0 else 1
        if s == 0 and len(facets):
            n_new = 0   # try the initial facets on their own first
        if cfg.refit == "always" and len(facets):
            sres, rows, r = synthesize_milp(cex, vs, None, len(facets) + 1, box, cfg,
                                            f"synth_{s}_refit", far)
            refit = True
        else:
            sres, rows, r = synthesize_milp(cex, vs, facets, n_new, box, cfg, f"synth_{s}", far)
            refit = False
            if sres.status == "infeasible" and len(facets) and cfg.refit == "on_infeasible":
                t_first = sres.seconds
                sres, rows, r = synthesize_milp(cex, vs, None, len(facets) + 1, box, cfg,
                                                f"synth_{s}_refit", far)
                sres.seconds += t_first
                refit = True
        entry["synth"] = {"status": sres.status, "seconds": sres.seconds, "nodes": sres.nodes,
                          "refit": refit}
        if not sres.ok:
            res.status = _status_of(sres)
            res.message = f"synthesis {sres.status} at iteration {s}"
            res.log.append(entry)
            break
        old = facets
        facets = rows if refit else (np.vstack([facets, rows]) if len(facets) else rows)
        rho = r
        plf = Plf(facets, np.zeros(len(facets)), rho, "milp")
        entry["rho"] = rho
        entry["new_facet"] = rows.tolist()
        flags, found, stats = [], [], []
        timed_out = False
        phases = [(1, lambda: verify_phase1(plf, box, cfg, f"phase1_{s}")),
                  (2, lambda: verify_phase2(plf, vs, box, cfg, f"phase2_{s}")),
                  (3, lambda: verify_phase3(plf, vs, box, cfg, f"phase3_{s}"))]
        if cfg.bounded:
            phases.append((4, lambda: verify_bounded(plf, box, cfg, f"bounded_{s}")))
        for phase, fn in phases:
            vres, E = fn()
            stats.append({"phase": phase, "status": vres.status, "seconds": vres.seconds,
                          "nodes": vres.nodes})
            if vres.status in ("timeout", "numerical", "error", "unbounded"):
                timed_out = True
                flags.append(0)
            elif vres.ok:
                flags.append(0)
                res.replay_total += 1
                if phase == 4:
                    res.replay_ok += int(plf_inside(plf, E))
                elif phase_violated(plf, vs, E, phase, cfg.eps):
                    res.replay_ok += 1
                found.append((phase, E))
            else:
                flags.append(1)
        entry["flags"] = flags
        entry["phase_status"] = [st["status"] for st in stats]
        entry["solver_stats"] = stats
        entry["counterexamples"] = [{"phase": p, "E": E.tolist()} for p, E in found]
        log.info("milp iter %d: rho %.6g, %d facets, phases %s, synth %.2fs", s, rho,
                 len(facets), entry["phase_status"], sres.seconds)
        res.iterations = s + 1
        res.log.append(entry)
        if timed_out:
            res.status, res.message = CAP, f"verification inconclusive at iteration {s}"
            break
        if all(flags):
            res.status = SUCCESS
            break
        if not refit and rho > 0 and _stalled(rows, old, cfg.stall_tol):
            # the minimal level creeps up point by point; try a few larger ones
            for f in cfg.inflate:
                trial = Plf(facets, np.zeros(len(facets)), rho * f, "milp")
                if _verify_all(trial, vs, box, cfg, f"inflate_{s}_{f:g}", res):
                    rho = trial.rho
                    entry["inflated"] = f
                    res.status = SUCCESS
                    break
            if res.ok:
                log.info("milp iter %d: level inflated to %.6g", s, rho)
                break
        added = 0
        for phase, E in found[:cfg.max_cex_per_iter + 1]:
            if phase == 4:
                if not too_close(E, far):
                    far.append(E)
                    res.counterexamples.append(E)
                    added += 1
                continue
            if too_close(E, cex):
                continue
            cex.append(E)
            res.counterexamples.append(E)
            added += 1
        if not added:
            res.status, res.message = CAP, f"verifier repeated known points at iteration {s}"
            break
    else:
        res.message = f"iteration cap {cfg.max_iter} reached"
    if len(facets):
        res.plf = Plf(facets, np.zeros(len(facets)), rho, "milp")
    res.elapsed = time.perf_counter() - t_start
    if res.ok and cfg.oracle_resolution:
        res.report = check_isoa_grid(res.plf, vs, box, cfg.oracle_resolution,
                                     samples=cfg.oracle_samples, seed=cfg.seed)
    if cfg.dump_dir:
        os.makedirs(cfg.dump_dir, exist_ok=True)
        with open(os.path.join(cfg.dump_dir, "cegis_log.json"), "w") as fh:
            json.dump(res.log, fh, indent=1)
    return res
