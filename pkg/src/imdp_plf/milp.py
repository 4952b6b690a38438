"""Small MILP modelling layer over the HiGHS solver.

Indicator constraints are linearized with a big-M constant computed from
the variable bounds of each governed expression.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import highspy
import numpy as np
from scipy.sparse import coo_array

INF = math.inf

# tight tolerances: strictness margins are ~1e-6 while big-M constants reach 1e3
HIGHS_OPTIONS = {
    "output_flag": False,
    "threads": 1,
    "random_seed": 0,
    "mip_feasibility_tolerance": 1e-10,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "mip_rel_gap": 1e-9,
}


@dataclass
class MilpResult:
    status: str            # optimal | infeasible | unbounded | timeout | numerical | error
    x: np.ndarray | None
    objective: float | None
    seconds: float
    nodes: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class MilpProblem:
    def __init__(self, name: str = "milp"):
        self.name = name
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.rows: list[tuple[dict, float, float]] = []
        self.obj: dict = {}
        self.sense = "min"
        self.big_m: list[tuple[float, float]] = []   # (M, largest violation)

    # variables -------------------------------------------------------
    def var(self, name: str, lb: float = -INF, ub: float = INF) -> int:
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(False)
        return len(self.names) - 1

    def binary(self, name: str) -> int:
        i = self.var(name, 0.0, 1.0)
        self.integer[i] = True
        return i

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_binaries(self) -> int:
        return sum(self.integer)

    # constraints -----------------------------------------------------
    def constr(self, coeffs: dict, lo: float = -INF, hi: float = INF):
        coeffs = {k: float(v) for k, v in coeffs.items() if v != 0}
        if not coeffs:
            if lo > 1e-12 or hi < -1e-12:
                # constant row that can never hold
                self.rows.append(({}, lo, hi))
            return
        self.rows.append((coeffs, float(lo), float(hi)))

    def le(self, coeffs: dict, rhs: float):
        self.constr(coeffs, -INF, rhs)

    def ge(self, coeffs: dict, rhs: float):
        self.constr(coeffs, rhs, INF)

    def at_least(self, binaries, k: float = 1.0, minus=()):
        """``sum(binaries) - sum(minus) >= k``."""
        co = {b: 1.0 for b in binaries}
        for b in minus:
            co[b] = co.get(b, 0.0) - 1.0
        self.ge(co, k)

    def expr_range(self, coeffs: dict) -> tuple[float, float]:
        lo = hi = 0.0
        for k, a in coeffs.items():
            if a > 0:
                lo += a * self.lb[k]
                hi += a * self.ub[k]
            else:
                lo += a * self.ub[k]
                hi += a * self.lb[k]
        return lo, hi

    def le_if(self, coeffs: dict, rhs: float, active):
        """``coeffs @ x <= rhs`` whenever every ``(binary, value)`` in ``active`` holds."""
        coeffs = {k: float(v) for k, v in coeffs.items() if v != 0}
        lo, hi = self.expr_range(coeffs)
        worst = max(abs(hi - rhs), abs(lo - rhs))
        if not math.isfinite(worst):
            raise ValueError("big-M needs finite bounds on every governed variable")
        if hi <= rhs:
            return  # implied by the bounds
        # tightest valid constant: the largest possible violation, plus a relative pad
        M = (hi - rhs) * (1.0 + 1e-9) + 1e-9
        assert M >= hi - rhs, (M, hi - rhs)
        self.big_m.append((M, hi - rhs))
        row = dict(coeffs)
        bound = rhs
        for b, val in active:
            if val:
                row[b] = row.get(b, 0.0) + M
                bound += M
            else:
                row[b] = row.get(b, 0.0) - M
        self.le(row, bound)

    def ge_if(self, coeffs: dict, rhs: float, active):
        self.le_if({k: -v for k, v in coeffs.items()}, -rhs, active)

    # objective -------------------------------------------------------
    def minimize(self, coeffs: dict):
        self.obj, self.sense = dict(coeffs), "min"

    def maximize(self, coeffs: dict):
        self.obj, self.sense = dict(coeffs), "max"

    # solving ---------------------------------------------------------
    def _csc(self):
        n = self.n_vars
        r, cidx, vals, lo, hi = [], [], [], [], []
        for i, (co, l, h) in enumerate(self.rows):
            for k, a in co.items():
                r.append(i)
                cidx.append(k)
                vals.append(a)
            lo.append(l)
            hi.append(h)
        A = coo_array((vals, (r, cidx)), shape=(len(self.rows), n)).tocsc()
        return A, np.array(lo, dtype=float), np.array(hi, dtype=float)

    def _highs(self, lb, ub, integer, time_limit):
        h = highspy.Highs()
        for key, val in HIGHS_OPTIONS.items():
            h.setOptionValue(key, val)
        if time_limit:
            h.setOptionValue("time_limit", float(time_limit))
        lp = highspy.HighsLp()
        n = self.n_vars
        lp.num_col_ = n
        lp.num_row_ = len(self.rows)
        c = np.zeros(n)
        for k, a in self.obj.items():
            c[k] = a
        lp.col_cost_ = c
        lp.col_lower_ = np.where(np.isinf(lb), -highspy.kHighsInf, lb)
        lp.col_upper_ = np.where(np.isinf(ub), highspy.kHighsInf, ub)
        A, lo, hi = self._csc()
        lp.row_lower_ = np.where(np.isinf(lo), -highspy.kHighsInf, lo)
        lp.row_upper_ = np.where(np.isinf(hi), highspy.kHighsInf, hi)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        lp.sense_ = highspy.ObjSense.kMaximize if self.sense == "max" else highspy.ObjSense.kMinimize
        if any(integer):
            lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
                               for f in integer]
        h.passModel(lp)
        h.run()
        return h

    def solve(self, time_limit: float | None = None, polish: bool = True) -> MilpResult:
        """Solve; with ``polish`` the continuous part is re-solved with binaries fixed.

        A MIP answer whose rounded binaries admit no continuous completion
        is reported as ``numerical`` rather than trusted.
        """
        t0 = time.perf_counter()
        for co, l, h in self.rows:
            if not co and (l > 1e-12 or h < -1e-12):
                return MilpResult("infeasible", None, None, time.perf_counter() - t0)
        lb = np.array(self.lb, dtype=float)
        ub = np.array(self.ub, dtype=float)
        integ = np.array(self.integer, dtype=bool)
        h = self._highs(lb, ub, integ, time_limit)
        out = self._result(h, t0)
        if out.ok and polish and integ.any():
            fixed = np.round(out.x[integ])
            lb[integ] = fixed
            ub[integ] = fixed
            h2 = self._highs(lb, ub, np.zeros_like(integ), time_limit)
            res2 = self._result(h2, t0)
            if res2.ok:
                res2.x[integ] = fixed
                res2.nodes = out.nodes
                out = res2
            else:
                out = MilpResult("numerical", None, None, time.perf_counter() - t0, out.nodes)
        return out

    def _result(self, h, t0) -> MilpResult:
        secs = time.perf_counter() - t0
        st = h.getModelStatus()
        info = h.getInfo()
        nodes = int(max(getattr(info, "mip_node_count", 0), 0))
        S = highspy.HighsModelStatus
        if st == S.kOptimal:
            x = np.array(h.getSolution().col_value, dtype=float)
            return MilpResult("optimal", x, float(info.objective_function_value), secs, nodes)
        if st == S.kTimeLimit:
            return MilpResult("timeout", None, None, secs, nodes)
        if st == S.kInfeasible:
            return MilpResult("infeasible", None, None, secs, nodes)
        if st in (S.kUnbounded, S.kUnboundedOrInfeasible):
            return MilpResult("unbounded", None, None, secs, nodes)
        return MilpResult("error", None, None, secs, nodes)

    # export ----------------------------------------------------------
    def to_lp(self) -> str:
        """CPLEX LP text of the problem (indicators already linearized)."""
        def term(co):
            parts = []
            for k, a in co.items():
                sign = "-" if a < 0 else "+"
                parts.append(f"{sign} {abs(a):.17g} {self.names[k]}")
            text = " ".join(parts) if parts else "0 " + self.names[0]
            return text[2:] if text.startswith("+ ") else text

        out = [f"\\ {self.name}", "Maximize" if self.sense == "max" else "Minimize",
               " obj: " + term(self.obj or {0: 0.0}), "Subject To"]
        for i, (co, l, h) in enumerate(self.rows):
            if not co:
                continue
            if l == h:
                out.append(f" r{i}: {term(co)} = {h:.17g}")
                continue
            if h < INF:
                out.append(f" r{i}u: {term(co)} <= {h:.17g}")
            if l > -INF:
                out.append(f" r{i}l: {term(co)} >= {l:.17g}")
        out.append("Bounds")
        for k, name in enumerate(self.names):
            if self.integer[k]:
                continue
            lb = "-inf" if self.lb[k] == -INF else f"{self.lb[k]:.17g}"
            ub = "+inf" if self.ub[k] == INF else f"{self.ub[k]:.17g}"
            out.append(f" {lb} <= {name} <= {ub}")
        bins = [self.names[k] for k in range(self.n_vars) if self.integer[k]]
        if bins:
            out.append("Binaries")
            out.append(" " + " ".join(bins))
        out.append("End")
        return "\n".join(out) + "\n"
