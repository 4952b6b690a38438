"""Direct (solver-free) evaluation of the certificate conditions at a point.

Used to replay counterexamples and to brute-force the solver encodings.
``exact=True`` evaluates in rational arithmetic on the exact binary values
of the float inputs, which is what the SMT encodings see.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .plf import Plf
from .uncertainty import VertexSet


def _fr(M):
    M = np.asarray(M)
    if M.dtype == object:
        return M
    return np.vectorize(lambda v: Fraction(float(v)), otypes=[object])(M)


def _rows(C, d, exact):
    if exact:
        return _fr(C), _fr(d)
    return np.asarray(C, dtype=float), np.asarray(d, dtype=float)


def facet_values(C, d, E, exact=False):
    C, d = _rows(C, d, exact)
    E = _fr(E) if exact else np.asarray(E, dtype=float)
    return C.dot(E) - d


def policy_worst(C, d, vs: VertexSet, E, exact=False):
    """``W_pi = max_{j, k} c_j @ (A_k E + L_k) - d_j`` for every policy."""
    C, d = _rows(C, d, exact)
    E = _fr(E) if exact else np.asarray(E, dtype=float)
    out = []
    for pi in range(vs.M):
        A, L = vs.policy(pi)
        best = None
        for Ak, Lk in zip(A, L):
            if exact:
                s = _fr(Ak).dot(E) + _fr(Lk)
            else:
                s = Ak @ E + Lk
            v = max(C.dot(s) - d)
            best = v if best is None or v > best else best
        out.append(best)
    return out


@dataclass
class PsiResult:
    psi0: bool
    psi1: bool
    psi2: list
    psi3: list
    V: object
    W: list

    @property
    def holds(self) -> bool:
        return self.psi0 and self.psi1 and any(a and b for a, b in zip(self.psi2, self.psi3))


def check_psi(C, d, vs: VertexSet, E, rho=1, exact=True) -> PsiResult:
    """Clauses of the fixed-level certificate (free offsets, level ``rho``)."""
    rho = Fraction(rho) if exact else float(rho)
    v = facet_values(C, d, E, exact)
    V = max(v)
    W = policy_worst(C, d, vs, E, exact)
    _, dd = _rows(C, d, exact)
    psi0 = V >= 0
    psi1 = all(x >= -rho for x in dd)
    psi2 = [bool(V <= rho or w < V) for w in W]
    psi3 = [bool(V > rho or w <= rho) for w in W]
    return PsiResult(bool(psi0), bool(psi1), psi2, psi3, V, W)


def psi_holds(plf: Plf, vs: VertexSet, E, exact=True) -> bool:
    if exact and plf.exact is not None:
        rows, offs, rho = plf.exact
        C = np.array(rows, dtype=object)
        d = np.array(offs, dtype=object)
        return check_psi(C, d, vs, E, rho, True).holds
    return check_psi(plf.C, plf.d, vs, E, plf.rho, exact).holds


@dataclass
class PhiResult:
    phi0: bool
    inside: bool
    outside: bool
    inside_ok: list
    outside_ok: list
    V: float
    W: list

    @property
    def holds(self) -> bool:
        ok_in = self.inside and any(self.inside_ok)
        ok_out = self.outside and any(self.outside_ok)
        return self.phi0 and (ok_in or ok_out)


def check_phi(C, vs: VertexSet, E, rho, eps, d=None) -> PhiResult:
    """Clauses of the minimal-level certificate with strictness margin ``eps``.

    ``V > rho`` is read as ``V >= rho + eps`` and ``W < V`` as
    ``W <= V - eps``; points with ``rho < V < rho + eps`` satisfy neither
    branch.
    """
    C = np.asarray(C, dtype=float)
    d = np.zeros(C.shape[0]) if d is None else np.asarray(d, dtype=float)
    V = float(max(facet_values(C, d, E)))
    W = [float(w) for w in policy_worst(C, d, vs, E)]
    inside = V <= rho
    outside = V >= rho + eps
    return PhiResult(V >= 0, inside, outside, [w <= rho for w in W],
                     [w <= V - eps for w in W], V, W)


def phase_violated(plf: Plf, vs: VertexSet, E, phase: int, eps: float) -> bool:
    """Does ``E`` violate the clause searched by verification ``phase``?

    Uses tolerance ``eps / 2`` in the violating direction.
    """
    v = facet_values(plf.C, plf.d, E)
    V = float(max(v))
    tol = 0.5 * eps
    if phase == 1:
        return V <= -tol
    W = policy_worst(plf.C, plf.d, vs, E)
    if phase == 2:
        return V >= plf.rho + tol and all(w >= V - tol for w in W)
    if phase == 3:
        return V <= plf.rho + tol and all(w >= plf.rho + tol for w in W)
    raise ValueError(f"unknown phase {phase}")
