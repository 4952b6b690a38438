# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled grid-oracle kernels (see ``_kernels_py`` for the reference)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()


def affine_max(G, h, seg, points):
    cdef double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef long long[::1] sv = np.ascontiguousarray(seg, dtype=np.int64)
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t N = P.shape[0], d = P.shape[1], S = sv.shape[0] - 1
    out_arr = np.empty((N, S))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, s, r, t
    cdef double best, acc
    with nogil:
        for p in range(N):
            for s in range(S):
                best = -INFINITY
                for r in range(sv[s], sv[s + 1]):
                    acc = hv[r]
                    for t in range(d):
                        acc = acc + Gv[r, t] * P[p, t]
                    if acc > best:
                        best = acc
                out[p, s] = best
    return out_arr


def box_worst(C, dvec, gammas, p_mid, p_rad, r_mid, r_rad, w, points):
    cdef double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(dvec, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(gammas, dtype=np.float64)
    cdef double[:, :, ::1] pm = np.ascontiguousarray(p_mid, dtype=np.float64)
    cdef double[:, :, ::1] pr = np.ascontiguousarray(p_rad, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t M = pm.shape[0], n = pm.shape[1], q = gv.shape[0]
    cdef Py_ssize_t k = Cv.shape[0], N = P.shape[0]
    cdef Py_ssize_t pt, pi, j, m, x, y
    cdef double val, g, best
    # reward part and constant do not depend on the point
    Cm = np.asarray(C, dtype=np.float64).reshape(k, q, n)
    rconst_arr = (np.einsum("jmx,imx->ji", Cm, np.asarray(r_mid, dtype=np.float64))
                  + np.einsum("jmx,imx->ji", np.abs(Cm), np.asarray(r_rad, dtype=np.float64))
                  - (np.asarray(C, dtype=np.float64) @ np.asarray(w, dtype=np.float64)
                     + np.asarray(dvec, dtype=np.float64))[:, None])
    cdef double[:, ::1] rconst = np.ascontiguousarray(rconst_arr)
    Y_arr = np.empty(q * n)
    cdef double[::1] Y = Y_arr
    G_arr = np.empty((n, n))
    cdef double[:, ::1] Gm = G_arr
    out_arr = np.full((N, M), -np.inf)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for pt in range(N):
            for x in range(q * n):
                Y[x] = P[pt, x] + wv[x]
            for j in range(k):
                for x in range(n):
                    for y in range(n):
                        g = 0.0
                        for m in range(q):
                            g = g + gv[m] * Cv[j, m * n + x] * Y[m * n + y]
                        Gm[x, y] = g
                for pi in range(M):
                    val = rconst[j, pi]
                    for x in range(n):
                        for y in range(n):
                            g = Gm[x, y]
                            val = val + g * pm[pi, x, y] + fabs(g) * pr[pi, x, y]
                    if val > out[pt, pi]:
                        out[pt, pi] = val
    return out_arr
