"""Counterexample-guided synthesis with the level fixed to one, using z3.

All data enter the solver as exact rationals (the binary values of the
floats), so a verifier answer can be replayed exactly with ``Fraction``.
"""
from __future__ import annotations

import json
import logging
import os
import time
from fractions import Fraction

import numpy as np
import z3

from .cegis_common import CAP, FAIL, SUCCESS, CegisConfig, CegisResult, initial_counterexamples
from .conditions import check_psi
from .plf import Plf, check_isoa_grid
from .uncertainty import ErrorBox, VertexSet

RHO = Fraction(1)

log = logging.getLogger(__name__)


def Q(x) -> z3.ArithRef:
    x = x if isinstance(x, Fraction) else Fraction(float(x))
    return z3.Q(x.numerator, x.denominator)


def to_fraction(val) -> Fraction:
    if z3.is_rational_value(val):
        return Fraction(val.numerator_as_long(), val.denominator_as_long())
    if z3.is_algebraic_value(val):
        return Fraction(val.approx(30).as_fraction())
    raise TypeError(f"not a rational value: {val}")


class SolverSession:
    """Incremental z3 session; ``optimize=True`` enables objectives."""

    def __init__(self, timeout: float = 120.0, optimize: bool = False):
        self.optimize = optimize
        self.s = z3.Optimize() if optimize else z3.Solver()
        self.s.set("timeout", int(timeout * 1000))
        self.elapsed = 0.0

    def add(self, *cons):
        self.s.add(*cons)

    def minimize(self, expr):
        self.s.minimize(expr)

    def push(self):
        self.s.push()

    def pop(self):
        self.s.pop()

    def check(self) -> str:
        t0 = time.perf_counter()
        r = self.s.check()
        self.elapsed += time.perf_counter() - t0
        if r == z3.sat:
            return "sat"
        return "unsat" if r == z3.unsat else "unknown"

    def model(self):
        return self.s.model()

    def to_smt2(self) -> str:
        return self.s.sexpr() if self.optimize else self.s.to_smt2()


def _dot(c, v):
    """Linear expression ``c @ v``; either side may hold z3 terms."""
    terms = []
    for a, b in zip(c, v):
        if isinstance(a, Fraction) and isinstance(b, Fraction):
            if a != 0 and b != 0:
                terms.append(Q(a * b))
        elif isinstance(a, Fraction):
            if a != 0:
                terms.append(Q(a) * b)
        elif isinstance(b, Fraction):
            if b != 0:
                terms.append(a * Q(b))
        else:
            terms.append(a * b)
    return z3.Sum(terms) if terms else Q(0)


def _lin(c, v, off):
    """``c @ v - off`` as a Fraction when everything is constant."""
    if all(isinstance(a, Fraction) for a in c) and isinstance(off, Fraction):
        return sum((a * b for a, b in zip(c, v)), Fraction(0)) - off
    rhs = off if not isinstance(off, Fraction) else Q(off)
    return _dot(c, v) - rhs


def _cmp(op, a, b):
    """Compare possibly-constant terms, folding to a Python bool when possible."""
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return z3.BoolVal(bool(op(a, b)))
    a = Q(a) if isinstance(a, Fraction) else a
    b = Q(b) if isinstance(b, Fraction) else b
    return op(a, b)


def _le(a, b):
    return _cmp(lambda x, y: x <= y, a, b)


def _lt(a, b):
    return _cmp(lambda x, y: x < y, a, b)


def _ge(a, b):
    return _cmp(lambda x, y: x >= y, a, b)


def _gt(a, b):
    return _cmp(lambda x, y: x > y, a, b)


class ExactVertices:
    """Vertex data as Fractions, grouped by policy."""

    def __init__(self, vs: VertexSet):
        self.M = vs.M
        self.dim = vs.dim
        self.pairs = []
        for pi in range(vs.M):
            A, L = vs.policy(pi)
            self.pairs.append([
                ([[Fraction(float(v)) for v in row] for row in Ak], [Fraction(float(v)) for v in Lk])
                for Ak, Lk in zip(A, L)
            ])

    def successors(self, E):
        """Exact ``A_k E + L_k`` for every policy and vertex."""
        return [[[sum((a * e for a, e in zip(row, E)), Fraction(0)) + l for row, l in zip(Ak, Lk)]
                 for Ak, Lk in verts] for verts in self.pairs]


def _exact_vec(E):
    return [v if isinstance(v, Fraction) else Fraction(float(v)) for v in E]


def encode_synthesis(cex, ev: ExactVertices, fixed, free, rho=RHO):
    """Constraints that every point of ``cex`` satisfies the certificate.

    ``fixed``: list of ``(c, d)`` Fraction facets; ``free``: list of
    ``(c, d)`` with z3 variables. Returns a list of z3 constraints.
    """
    facets = list(fixed) + list(free)
    cons = []
    for e_idx, E in enumerate(cex):
        E = _exact_vec(E)
        v = [_lin(c, E, d) for c, d in facets]
        cons.append(z3.Or([_ge(x, Fraction(0)) for x in v]))
        t = z3.Real(f"t_{e_idx}")
        cons.append(z3.Or([_le(t, x) for x in v]))
        inside = z3.And([_le(x, rho) for x in v])
        options = []
        for succ in ev.successors(E):
            sv = [_lin(c, s, d) for s in succ for c, d in facets]
            dec = z3.And([_lt(x, t) for x in sv])
            inv = z3.And([_le(x, rho) for x in sv])
            options.append(z3.And(z3.Or(inside, dec), z3.Or(z3.Not(inside), inv)))
        cons.append(z3.Or(options))
    for c, d in free:
        cons.append(d >= -Q(rho))
    return cons


def new_facet_vars(dim, tag, cfg: CegisConfig, rho=RHO):
    c = [z3.Real(f"c{tag}_{t}") for t in range(dim)]
    d = z3.Real(f"d{tag}")
    cons = [d >= -Q(rho), d <= Q(Fraction(cfg.d_max) * rho)]
    for x in c:
        cons += [x <= Q(cfg.c_max), x >= -Q(cfg.c_max)]
    cons.append(z3.Or([z3.Or(x >= Q(cfg.c_min), x <= -Q(cfg.c_min)) for x in c]))
    return (c, d), cons


def encode_verification(facets, ev: ExactVertices, box: ErrorBox, rho=RHO):
    """Constraints whose models are points violating the certificate.

    ``facets``: exact ``(c, d)`` pairs. Returns ``(E vars, constraints)``.
    """
    dim = ev.dim
    E = [z3.Real(f"E_{t}") for t in range(dim)]
    cons = []
    for t, e in enumerate(box.e_max):
        r = Fraction(float(e))
        cons += [E[t] <= Q(r), E[t] >= -Q(r)]
    v = [_lin(c, E, d) for c, d in facets]
    T = z3.Real("T")
    cons += [T >= x for x in v]
    not0 = z3.And([x < 0 for x in v])
    not1 = z3.BoolVal(any(d < -rho for _, d in facets))
    outside = z3.Or([x > Q(rho) for x in v])
    inside = z3.And([x <= Q(rho) for x in v])
    per_pi = []
    for verts in ev.pairs:
        sv = []
        for Ak, Lk in verts:
            for c, d in facets:
                cA = [sum((c[i] * Ak[i][t] for i in range(dim)), Fraction(0)) for t in range(dim)]
                sv.append(_lin(cA, E, d - sum((a * b for a, b in zip(c, Lk)), Fraction(0))))
        not2 = z3.And(outside, z3.Or([x >= T for x in sv]))
        not3 = z3.And(inside, z3.Or([x > Q(rho) for x in sv]))
        per_pi.append(z3.Or(not2, not3))
    cons.append(z3.Or(not0, not1, z3.And(per_pi)))
    return E, cons


def _dump(cfg, name, session):
    if cfg.dump_dir:
        os.makedirs(cfg.dump_dir, exist_ok=True)
        with open(os.path.join(cfg.dump_dir, name), "w") as fh:
            fh.write(session.to_smt2())


def synthesize_smt(cex, ev, fixed, n_new, cfg: CegisConfig, tag="", rho=RHO):
    """New facets satisfying the certificate on ``cex``; ``None`` if infeasible.

    Returns ``(status, facets, seconds)`` with status sat/unsat/unknown.
    """
    sess = SolverSession(cfg.timeout, optimize=cfg.tighten)
    free = []
    for i in range(n_new):
        f, bounds = new_facet_vars(ev.dim, f"{tag}{i}", cfg, rho)
        free.append(f)
        sess.add(*bounds)
    sess.add(*encode_synthesis(cex, ev, fixed, free, rho))
    if cfg.tighten:
        sess.minimize(z3.Sum([d for _, d in free]))
    _dump(cfg, f"synth{tag}.smt2", sess)
    res = sess.check()
    if res != "sat":
        return res, None, sess.elapsed
    mdl = sess.model()
    out = []
    for c, d in free:
        out.append(([to_fraction(mdl.eval(x, model_completion=True)) for x in c],
                    to_fraction(mdl.eval(d, model_completion=True))))
    return res, out, sess.elapsed


def verify_smt(facets, ev, box, cfg: CegisConfig, tag="", rho=RHO):
    """Counterexample search. Returns ``(status, E or None, seconds)``."""
    sess = SolverSession(cfg.timeout)
    E, cons = encode_verification(facets, ev, box, rho)
    sess.add(*cons)
    _dump(cfg, f"verify{tag}.smt2", sess)
    res = sess.check()
    if res != "sat":
        return res, None, sess.elapsed
    mdl = sess.model()
    return res, [to_fraction(mdl.eval(x, model_completion=True)) for x in E], sess.elapsed


def _plf(facets, rho=RHO):
    return Plf.from_exact([c for c, _ in facets], [d for _, d in facets], rho, "smt")


def _fmt(x: Fraction):
    return float(x)


def run_cegis_smt(vs: VertexSet, box: ErrorBox, cfg: CegisConfig | None = None,
                  e0=None, cex0=None) -> CegisResult:
    """Alternate synthesis over finitely many points with exact verification."""
    cfg = cfg or CegisConfig()
    t_start = time.perf_counter()
    ev = ExactVertices(vs)
    pts = cex0 if cex0 is not None else initial_counterexamples(box, e0, cfg)
    cex = [_exact_vec(p) for p in pts]
    facets: list = []
    res = CegisResult(status=CAP)
    for s in range(cfg.max_iter):
        entry = {"s": s}
        n_new = cfg.first_facets if not facets else 1
        refit = cfg.refit == "always" and facets
        status, new, t_syn = ("unsat", None, 0.0) if refit else synthesize_smt(cex, ev, facets, n_new, cfg, f"_{s}")
        if status == "unsat" and facets and cfg.refit in ("on_infeasible", "always"):
            status, new, t2 = synthesize_smt(cex, ev, [], len(facets) + 1, cfg, f"_{s}_refit")
            t_syn += t2
            if status == "sat":
                facets = []
                entry["refit"] = True
        entry["synth_ms"] = 1000 * t_syn
        if status == "unknown":
            res.status, res.message = CAP, f"synthesis timed out at iteration {s}"
            res.log.append(entry)
            break
        if status == "unsat":
            res.status, res.message = FAIL, f"no facet satisfies the certificate on {len(cex)} points"
            res.log.append(entry)
            break
        facets = facets + new
        entry["new_facet"] = [{"c": [_fmt(v) for v in c], "d": _fmt(d)} for c, d in new]
        status, E, t_ver = verify_smt(facets, ev, box, cfg, f"_{s}")
        entry["verify_ms"] = 1000 * t_ver
        log.info("smt iter %d: %d facets, verifier %s, %.2fs", s, len(facets), status,
                 (t_syn + t_ver))
        entry["solver_time_ms"] = entry["synth_ms"] + entry["verify_ms"]
        res.iterations = s + 1
        if status == "unknown":
            res.status, res.message = CAP, f"verification timed out at iteration {s}"
            entry["counterexample"] = None
            res.log.append(entry)
            break
        if status == "unsat":
            entry["counterexample"] = None
            res.log.append(entry)
            res.status = SUCCESS
            break
        entry["counterexample"] = [_fmt(v) for v in E]
        C = np.array([c for c, _ in facets], dtype=object)
        D = np.array([d for _, d in facets], dtype=object)
        res.replay_total += 1
        if not check_psi(C, D, vs, np.array(E, dtype=object), RHO, exact=True).holds:
            res.replay_ok += 1
        if any(E == p for p in cex):
            raise AssertionError(f"verifier repeated counterexample {entry['counterexample']}")
        res.counterexamples.append(np.array([float(v) for v in E]))
        cex.append(E)
        res.log.append(entry)
    else:
        res.message = f"iteration cap {cfg.max_iter} reached"
    if facets:
        res.plf = _plf(facets)
    res.elapsed = time.perf_counter() - t_start
    if res.ok and cfg.oracle_resolution:
        res.report = check_isoa_grid(res.plf, vs, box, cfg.oracle_resolution,
                                     samples=cfg.oracle_samples, seed=cfg.seed)
    if cfg.dump_dir:
        os.makedirs(cfg.dump_dir, exist_ok=True)
        with open(os.path.join(cfg.dump_dir, "cegis_log.json"), "w") as fh:
            json.dump(res.log, fh, indent=1)
    return res
