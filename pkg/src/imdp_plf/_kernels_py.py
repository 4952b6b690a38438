"""Numpy implementations of the grid-oracle kernels.

Same signatures as the compiled ``_kernels`` module; used when the extension
is missing or ``IMDP_PLF_PURE`` is set.
"""
import numpy as np

CHUNK = 4096


def affine_max(G, h, seg, points):
    """``out[p, s] = max_{r in segment s} G[r] @ points[p] + h[r]``."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    seg = np.asarray(seg, dtype=np.int64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    N = points.shape[0]
    S = len(seg) - 1
    out = np.empty((N, S))
    for s0 in range(0, N, CHUNK):
        vals = points[s0:s0 + CHUNK] @ G.T + h
        out[s0:s0 + CHUNK] = np.maximum.reduceat(vals, seg[:-1], axis=1)
    return out


def box_worst(C, dvec, gammas, p_mid, p_rad, r_mid, r_rad, w, points):
    """Worst facet value of the successor over the interval box, per policy.

    ``out[p, pi] = max_j max_{P, R in box_pi} C[j] @ (A(P) E + L(P, R)) - d[j]``
    with ``E = points[p]``. Shapes: C (k, q*n); p_mid, p_rad (M, n, n);
    r_mid, r_rad (M, q, n); w (q*n,).
    """
    C = np.asarray(C, dtype=np.float64)
    dvec = np.asarray(dvec, dtype=np.float64)
    gammas = np.asarray(gammas, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    M, n, _ = p_mid.shape
    q = len(gammas)
    k = C.shape[0]
    N = points.shape[0]
    Cm = C.reshape(k, q, n)
    gC = Cm * gammas[None, :, None]
    out = np.full((N, M), -np.inf)
    for s0 in range(0, N, CHUNK):
        Y = (points[s0:s0 + CHUNK] + w).reshape(-1, q, n)
        for j in range(k):
            G = np.einsum("mx,pmy->pxy", gC[j], Y)
            const = -C[j] @ w - dvec[j]
            for pi in range(M):
                val = (np.einsum("pxy,xy->p", G, p_mid[pi])
                       + np.einsum("pxy,xy->p", np.abs(G), p_rad[pi])
                       + np.sum(Cm[j] * r_mid[pi]) + np.sum(np.abs(Cm[j]) * r_rad[pi])
                       + const)
                np.maximum(out[s0:s0 + CHUNK, pi], val, out=out[s0:s0 + CHUNK, pi])
    return out
